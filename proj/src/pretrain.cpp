#include "mgt/pretrain.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mgt {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void PretrainConfig::validate() const {
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw InputError("mask_rate must be in (0, 1)");
    if (!(gamma >= 1.0)) throw InputError("gamma must be >= 1");
    if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
    if (!(tau > 0.0)) throw InputError("tau must be > 0");
    if (pair_budget == 0) throw InputError("pair_budget must be >= 1");
    if (batch_size == 0) throw InputError("batch_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("dropout must be in [0, 1)");
    if (!(lr >= 0.0)) throw InputError("lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw InputError("weight_decay must be >= 0");
}

std::size_t masked_count(std::size_t len, double mask_rate) noexcept {
    const auto l = static_cast<std::size_t>(std::floor(mask_rate * static_cast<double>(len)));
    return std::clamp<std::size_t>(l, 1, len - 1);
}

MaskPlan apply_mask(std::size_t len, double mask_rate, Rng& rng, bool exempt_seed) {
    if (len < 2) throw InputError("cannot mask a sequence of length " + std::to_string(len));
    const std::size_t l = masked_count(len, mask_rate);
    std::vector<std::uint32_t> pool(len);
    std::iota(pool.begin(), pool.end(), 0u);
    const std::size_t first = exempt_seed ? 1 : 0;
    for (std::size_t i = 0; i < l; ++i) {
        std::uniform_int_distribution<std::size_t> pick(first + i, len - 1);
        std::swap(pool[first + i], pool[pick(rng)]);
    }
    MaskPlan plan;
    plan.masked.assign(pool.begin() + static_cast<std::ptrdiff_t>(first),
                       pool.begin() + static_cast<std::ptrdiff_t>(first + l));
    std::sort(plan.masked.begin(), plan.masked.end());
    for (std::uint32_t p = 0, m = 0; p < len; ++p) {
        if (m < plan.masked.size() && plan.masked[m] == p) {
            ++m;
        } else {
            plan.unmasked.push_back(p);
        }
    }
    return plan;
}

template <typename T>
BatchTensors<T> assemble_batch(std::span<const NodeSequence* const> seqs, std::span<const MaskPlan> plans,
                               const FeatureMatrix& features, const PositionalTable& pe) {
    if (seqs.empty()) throw std::invalid_argument("assemble_batch: empty batch");
    if (seqs.size() != plans.size()) throw std::invalid_argument("assemble_batch: one mask plan per sequence");
    if (pe.rows != features.rows) {
        throw InputError("positional table has " + std::to_string(pe.rows) + " rows, features have " +
                         std::to_string(features.rows));
    }
    const std::size_t B = seqs.size(), d = features.cols, h = pe.cols;
    BatchTensors<T> out;
    out.batch = B;
    std::vector<std::size_t> offset(B);
    std::size_t total = 0;
    for (std::size_t s = 0; s < B; ++s) {
        const auto& plan = plans[s];
        const std::size_t len = seqs[s]->length();
        if (plan.masked.size() + plan.unmasked.size() != len || plan.unmasked.empty()) {
            throw std::invalid_argument("assemble_batch: mask plan does not partition sequence " + std::to_string(s));
        }
        offset[s] = total;
        total += len;
        out.enc_len = std::max(out.enc_len, plan.unmasked.size());
        out.dec_len = std::max(out.dec_len, len);
    }
    const auto zero_row = static_cast<std::uint32_t>(total);
    const std::size_t Lu = out.enc_len, L = out.dec_len;
    out.tokens = Tensor<T>::matrix(total + 1, d);
    out.enc_index.assign(B * Lu, zero_row);
    out.enc_pe = Tensor<T>::matrix(B * Lu, h);
    out.enc_valid.assign(B * Lu, 0);
    out.dec_index.assign(B * L, static_cast<std::uint32_t>(B * Lu + 1));
    out.dec_pe = Tensor<T>::matrix(B * L, h);
    out.dec_valid.assign(B * L, 0);
    out.unmasked_slots.resize(B);

    std::size_t n_masked = 0;
    for (const auto& p : plans) n_masked += p.masked.size();
    out.masked_targets = Tensor<T>::matrix(n_masked, d);
    std::size_t mrow = 0;

    auto copy_row = [](std::span<const float> src, std::span<T> dst) {
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<T>(src[j]);
    };

    for (std::size_t s = 0; s < B; ++s) {
        const NodeSequence& seq = *seqs[s];
        const MaskPlan& plan = plans[s];
        for (std::size_t i = 0; i < seq.length(); ++i) {
            const NodeId v = seq.at(i);
            if (v >= features.rows) {
                throw InputError("sequence node " + std::to_string(v) + " has no feature row (N=" +
                                 std::to_string(features.rows) + ")");
            }
            copy_row(features.row(v), out.tokens.row(offset[s] + i));
            copy_row(pe.row(v), out.dec_pe.row(s * L + i));
            out.dec_valid[s * L + i] = 1;
        }
        for (std::size_t j = 0; j < plan.unmasked.size(); ++j) {
            const std::uint32_t pos = plan.unmasked[j];
            const std::size_t slot = s * Lu + j;
            out.enc_index[slot] = static_cast<std::uint32_t>(offset[s] + pos);
            copy_row(pe.row(seq.at(pos)), out.enc_pe.row(slot));
            out.enc_valid[slot] = 1;
            out.dec_index[s * L + pos] = static_cast<std::uint32_t>(slot);
            out.unmasked_slots[s].push_back(static_cast<std::uint32_t>(slot));
        }
        const T w = T(1) / static_cast<T>(B * plan.masked.size());
        for (std::uint32_t pos : plan.masked) {
            out.dec_index[s * L + pos] = static_cast<std::uint32_t>(B * Lu);
            out.masked_slots.push_back(static_cast<std::uint32_t>(s * L + pos));
            out.masked_token_rows.push_back(static_cast<std::uint32_t>(offset[s] + pos));
            copy_row(features.row(seq.at(pos)), out.masked_targets.row(mrow++));
            out.masked_weights.push_back(w);
        }
    }
    return out;
}

std::optional<PairSample> sample_pairs(const std::vector<std::vector<std::uint32_t>>& unmasked_slots,
                                       std::size_t budget, Rng& rng) {
    if (budget == 0) throw std::invalid_argument("sample_pairs: budget must be >= 1");
    std::vector<double> weight;
    std::vector<std::uint32_t> flat;
    std::vector<std::uint32_t> owner;
    std::size_t nonempty = 0;
    for (std::size_t s = 0; s < unmasked_slots.size(); ++s) {
        const double m = static_cast<double>(unmasked_slots[s].size());
        weight.push_back(m * (m - 1.0));
        if (!unmasked_slots[s].empty()) ++nonempty;
        for (std::uint32_t slot : unmasked_slots[s]) {
            flat.push_back(slot);
            owner.push_back(static_cast<std::uint32_t>(s));
        }
    }
    const bool any_positive = std::any_of(weight.begin(), weight.end(), [](double w) { return w > 0.0; });
    if (nonempty < 2 || !any_positive) return std::nullopt;

    PairSample out;
    std::discrete_distribution<std::size_t> pick_seq(weight.begin(), weight.end());
    for (std::size_t i = 0; i < budget; ++i) {
        const auto& slots = unmasked_slots[pick_seq(rng)];
        std::uniform_int_distribution<std::size_t> pick_j(0, slots.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_k(0, slots.size() - 2);
        const std::size_t j = pick_j(rng);
        std::size_t k = pick_k(rng);
        if (k >= j) ++k;
        out.positive.emplace_back(slots[j], slots[k]);
    }
    std::uniform_int_distribution<std::size_t> pick_any(0, flat.size() - 1);
    while (out.negative.size() < budget) {
        const std::size_t a = pick_any(rng), b = pick_any(rng);
        if (owner[a] == owner[b]) continue;
        out.negative.emplace_back(flat[a], flat[b]);
    }
    return out;
}

template <typename T>
Var feature_recon_loss(Tape<T>& t, Var z_masked, Var x_masked, std::span<const T> weights, T gamma) {
    Var cos = nn::row_cosine(t, x_masked, z_masked);
    // relu guards against 1 - cos rounding slightly below zero.
    Var err = nn::relu(t, nn::affine(t, cos, T(-1), T(1)));
    return nn::weighted_sum(t, nn::pow_scalar(t, err, gamma), weights);
}

template <typename T>
Var infonce(Tape<T>& t, Var s_pos, Var s_neg, bool per_anchor) {
    if (!per_anchor) return nn::sub(t, nn::logsumexp(t, nn::concat_rows(t, {s_pos, s_neg})), nn::mean(t, s_pos));
    const std::size_t n = t.value(s_pos).rows();
    std::vector<Var> lse;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t idx[] = {i};
        lse.push_back(nn::logsumexp(t, nn::concat_rows(t, {nn::gather_rows(t, s_pos, std::span(idx)), s_neg})));
    }
    return nn::mean(t, nn::sub(t, nn::concat_rows(t, lse), s_pos));
}

template <typename T>
Var structure_loss(Tape<T>& t, Var projected, const PairSample& pairs, T tau, bool per_anchor) {
    if (pairs.positive.empty() || pairs.negative.empty()) throw std::invalid_argument("structure_loss: empty pair set");
    auto scores = [&](const std::vector<std::pair<std::uint32_t, std::uint32_t>>& ps) {
        std::vector<std::uint32_t> a, b;
        for (const auto& [x, y] : ps) {
            a.push_back(x);
            b.push_back(y);
        }
        Var cos = nn::row_cosine(t, nn::gather_rows(t, projected, std::span<const std::uint32_t>(a)),
                                 nn::gather_rows(t, projected, std::span<const std::uint32_t>(b)));
        return nn::affine(t, cos, T(1) / tau, T(0));
    };
    return infonce(t, scores(pairs.positive), scores(pairs.negative), per_anchor);
}

template <typename T>
Var total_loss(Tape<T>& t, Var l1, std::optional<Var> l2, T lambda) {
    if (!l2) return l1;
    return nn::add(t, l1, nn::affine(t, *l2, lambda, T(0)));
}

template <typename T>
LossParts<T> pretrain_loss(Tape<T>& t, nn::ModelParams<T>& model, const BatchTensors<T>& batch,
                           const std::optional<PairSample>& pairs, const PretrainConfig& cfg,
                           const nn::ForwardContext& ctx) {
    const std::size_t h = model.config.hidden;
    if (batch.enc_pe.cols() != h) {
        throw InputError("positional encoding width " + std::to_string(batch.enc_pe.cols()) + " != hidden_size " +
                         std::to_string(h));
    }
    if (batch.tokens.cols() != model.config.in_dim) {
        throw InputError("feature width " + std::to_string(batch.tokens.cols()) + " != model input width " +
                         std::to_string(model.config.in_dim));
    }
    LossParts<T> out;
    out.tokens = t.input(batch.tokens);
    Var x_enc = nn::gather_rows(t, out.tokens, std::span<const std::uint32_t>(batch.enc_index));
    Var h0 = nn::add(t, project(t, model, x_enc), t.constant(batch.enc_pe));
    const nn::AttentionShape enc_shape{batch.batch, batch.enc_len, 1};
    Var hu = nn::encoder_forward(t, h0, model.encoder, enc_shape, std::span<const std::uint8_t>(batch.enc_valid), ctx);

    Var pool = nn::concat_rows(t, {hu, t.param(model.mask_token), t.constant(Tensor<T>::matrix(1, h))});
    Var hd = nn::add(t, nn::gather_rows(t, pool, std::span<const std::uint32_t>(batch.dec_index)),
                     t.constant(batch.dec_pe));
    const nn::AttentionShape dec_shape{batch.batch, batch.dec_len, 1};
    Var z = feature_decode(t, model, hd, dec_shape, std::span<const std::uint8_t>(batch.dec_valid), ctx);
    Var zm = nn::gather_rows(t, z, std::span<const std::uint32_t>(batch.masked_slots));
    out.feat = feature_recon_loss(t, zm, t.constant(batch.masked_targets), std::span<const T>(batch.masked_weights),
                                  static_cast<T>(cfg.gamma));
    if (pairs) {
        Var projected = structure_decode(t, model, hu);
        out.structure = structure_loss(t, projected, *pairs, static_cast<T>(cfg.tau), cfg.per_anchor);
    }
    out.total = total_loss(t, out.feat, out.structure, static_cast<T>(cfg.lambda));
    return out;
}

PretrainResult pretrain(const nn::ModelConfig& model_cfg, const PretrainConfig& cfg, const FeatureMatrix& features,
                        const PositionalTable& pe, const std::vector<NodeSequence>& sequences) {
    cfg.validate();
    model_cfg.validate();
    if (model_cfg.in_dim != features.cols) {
        throw InputError("model input width " + std::to_string(model_cfg.in_dim) + " != feature width " +
                         std::to_string(features.cols));
    }
    if (pe.cols != model_cfg.hidden) {
        throw InputError("positional encoding width " + std::to_string(pe.cols) + " != hidden_size " +
                         std::to_string(model_cfg.hidden));
    }
    std::vector<const NodeSequence*> usable;
    for (const auto& s : sequences) {
        if (s.length() >= 2) usable.push_back(&s);
    }
    if (usable.empty()) throw InputError("no sequence long enough to mask; pre-training needs context nodes");
    if (usable.size() < sequences.size()) {
        spdlog::warn("skipping {} sequences without enough context to mask", sequences.size() - usable.size());
    }

    Rng init_rng = make_stream(cfg.rng_seed, "init");
    Rng mask_rng = make_stream(cfg.rng_seed, "mask");
    Rng pair_rng = make_stream(cfg.rng_seed, "pairs");
    Rng drop_rng = make_stream(cfg.rng_seed, "dropout");
    Rng shuffle_rng = make_stream(cfg.rng_seed, "shuffle");

    PretrainResult result{nn::ModelParams<float>::init(model_cfg, init_rng), {}, {}};
    auto& model = result.model;
    nn::AdamW<float> opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    const nn::ForwardContext ctx{true, cfg.dropout, &drop_rng};

    std::vector<std::size_t> order(usable.size());
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_sum = 0.0;
        std::size_t batches = 0, skipped_struct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const NodeSequence*> seqs;
            std::vector<MaskPlan> plans;
            for (std::size_t i = start; i < end; ++i) {
                seqs.push_back(usable[order[i]]);
                plans.push_back(apply_mask(seqs.back()->length(), cfg.mask_rate, mask_rng, cfg.exempt_seed));
            }
            const auto batch = assemble_batch<float>(seqs, plans, features, pe);
            auto pairs = sample_pairs(batch.unmasked_slots, cfg.pair_budget, pair_rng);
            if (!pairs) ++skipped_struct;

            Tape<float> tape;
            const auto parts = pretrain_loss(tape, model, batch, pairs, cfg, ctx);
            EpochLog row;
            row.epoch = epoch;
            row.step = ++step;
            row.total = tape.value(parts.total)[0];
            row.feat = tape.value(parts.feat)[0];
            row.structure =
                parts.structure ? tape.value(*parts.structure)[0] : std::numeric_limits<double>::quiet_NaN();
            if (!std::isfinite(row.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " step " << step << " (feat=" << row.feat
                    << ", struct=" << row.structure << ", batch of " << seqs.size() << " sequences, first seed "
                    << seqs.front()->seed << ")";
                throw std::runtime_error(msg.str());
            }
            tape.backward(parts.total);
            opt.step(model.parameters());
            model.zero_grad();
            result.steps.push_back(row);
            epoch_sum += row.total;
            ++batches;
        }
        if (skipped_struct > 0) {
            spdlog::warn("epoch {}: structure loss skipped for {} batch(es) without valid pairs", epoch, skipped_struct);
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(batches));
        spdlog::info("epoch {} mean loss {:.6f}", epoch, result.epoch_loss.back());
    }
    return result;
}

std::string training_log_csv(const std::vector<EpochLog>& steps) {
    std::ostringstream out;
    out.precision(9);
    out << "epoch,step,loss_total,loss_feat,loss_struct\n";
    for (const auto& r : steps) {
        out << r.epoch << ',' << r.step << ',' << r.total << ',' << r.feat << ',';
        if (std::isfinite(r.structure)) out << r.structure;
        out << '\n';
    }
    return out.str();
}

#define MGT_INSTANTIATE_PRETRAIN(T)                                                                             \
    template BatchTensors<T> assemble_batch<T>(std::span<const NodeSequence* const>, std::span<const MaskPlan>, \
                                               const FeatureMatrix&, const PositionalTable&);                   \
    template Var feature_recon_loss<T>(Tape<T>&, Var, Var, std::span<const T>, T);                              \
    template Var infonce<T>(Tape<T>&, Var, Var, bool);                                                          \
    template Var structure_loss<T>(Tape<T>&, Var, const PairSample&, T, bool);                                  \
    template Var total_loss<T>(Tape<T>&, Var, std::optional<Var>, T);                                           \
    template LossParts<T> pretrain_loss<T>(Tape<T>&, nn::ModelParams<T>&, const BatchTensors<T>&,               \
                                           const std::optional<PairSample>&, const PretrainConfig&,             \
                                           const nn::ForwardContext&);

MGT_INSTANTIATE_PRETRAIN(float)
MGT_INSTANTIATE_PRETRAIN(double)

}  // namespace mgt
