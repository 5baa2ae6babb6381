#include "mgt/downstream.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include "mgt/nn/adamw.hpp"

namespace mgt {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

void parallel_chunks(std::size_t n, unsigned threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        pool.emplace_back([&, w, lo, hi] {
            try {
                if (lo < hi) fn(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// First sequence per seed, in input order.
std::vector<const NodeSequence*> unique_by_seed(const std::vector<NodeSequence>& seqs) {
    std::unordered_map<NodeId, std::size_t> seen;
    std::vector<const NodeSequence*> out;
    for (const auto& s : seqs) {
        if (seen.emplace(s.seed, out.size()).second) out.push_back(&s);
    }
    return out;
}

std::unordered_map<NodeId, const NodeSequence*> seed_index(const std::vector<NodeSequence>& seqs) {
    std::unordered_map<NodeId, const NodeSequence*> out;
    for (const auto& s : seqs) out.emplace(s.seed, &s);
    return out;
}

void check_inputs(const nn::ModelParams<float>& model, const FeatureMatrix& features, const PositionalTable& pe) {
    if (features.cols != model.config.in_dim) {
        throw InputError("feature width " + std::to_string(features.cols) + " != checkpoint input width " +
                         std::to_string(model.config.in_dim));
    }
    if (pe.cols != model.config.hidden) {
        throw InputError("positional encoding width " + std::to_string(pe.cols) + " != checkpoint hidden size " +
                         std::to_string(model.config.hidden));
    }
    if (pe.rows != features.rows) {
        throw InputError("positional table has " + std::to_string(pe.rows) + " rows, features have " +
                         std::to_string(features.rows));
    }
}

void check_sequence(const NodeSequence& seq, std::size_t n) {
    for (std::size_t i = 0; i < seq.length(); ++i) {
        if (seq.at(i) >= n) {
            throw InputError("sequence of seed " + std::to_string(seq.seed) + " references node " +
                             std::to_string(seq.at(i)) + " without a feature row");
        }
    }
}

Parameter<float> normal_param(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 0.02);
    auto m = Tensor<float>::matrix(rows, cols);
    for (auto& v : m.values()) v = static_cast<float>(dist(rng));
    return Parameter<float>(name, std::move(m));
}

Parameter<float> zero_param(const std::string& name, std::size_t n) {
    return Parameter<float>(name, Tensor<float>::vector(n));
}

// Seed embeddings for `seqs` in inference mode, batched.
DenseMatrix infer_seeds(nn::ModelParams<float>& model, const std::vector<const NodeSequence*>& seqs,
                        const FeatureMatrix& source, const PositionalTable& pe, std::size_t batch) {
    DenseMatrix out(seqs.size(), model.config.hidden);
    for (std::size_t start = 0; start < seqs.size(); start += batch) {
        const std::size_t end = std::min(seqs.size(), start + batch);
        Tape<float> t(false);
        std::span<const NodeSequence* const> part(seqs.data() + start, end - start);
        const auto& h = t.value(encode_seeds(t, model, part, source, pe, {}));
        std::copy_n(h.data(), h.size(), out.row(start).data());
    }
    return out;
}

FeatureMatrix token_source(nn::ModelParams<float>& model, const std::vector<NodeSequence>& seqs,
                           const FeatureMatrix& features, const PositionalTable& pe, bool use_augmentation) {
    if (!use_augmentation) return features;
    return augment_features(model, seqs, features, pe).matrix;
}

std::vector<int> argmax_rows(const DenseMatrix& logits) {
    std::vector<int> out(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        auto r = logits.row(i);
        out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

// x W + b for plain matrices.
DenseMatrix affine_rows(const DenseMatrix& x, const Tensor<float>& w, const Tensor<float>& b) {
    DenseMatrix out(x.rows, w.cols());
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
            double acc = b[c];
            for (std::size_t j = 0; j < x.cols; ++j) acc += static_cast<double>(x(i, j)) * w(j, c);
            out(i, c) = static_cast<float>(acc);
        }
    }
    return out;
}

std::vector<double> softmax_rows(const DenseMatrix& logits) {
    std::vector<double> out(logits.data.size());
    for (std::size_t i = 0; i < logits.rows; ++i) {
        auto r = logits.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0;
        for (std::size_t c = 0; c < r.size(); ++c) z += std::exp(r[c] - mx);
        for (std::size_t c = 0; c < r.size(); ++c) out[i * r.size() + c] = std::exp(r[c] - mx) / z;
    }
    return out;
}

void add_classification_metrics(EvalReport& report, const std::string& prefix, const DenseMatrix& logits,
                                const std::vector<int>& labels, std::size_t num_classes) {
    if (labels.empty()) return;
    report.metrics[prefix + "accuracy"] = accuracy(argmax_rows(logits), labels);
    try {
        report.metrics[prefix + "roc_auc"] = roc_auc_multiclass(softmax_rows(logits), labels, num_classes);
    } catch (const InputError& e) {
        spdlog::warn("{}roc_auc not reported: {}", prefix, e.what());
    }
}

}  // namespace

Var encode_seeds(Tape<float>& t, nn::ModelParams<float>& model, std::span<const NodeSequence* const> seqs,
                 const FeatureMatrix& tokens_source, const PositionalTable& pe, const nn::ForwardContext& ctx) {
    check_inputs(model, tokens_source, pe);
    const std::size_t B = seqs.size(), d = tokens_source.cols, h = pe.cols;
    std::size_t L = 0;
    for (const auto* s : seqs) {
        check_sequence(*s, tokens_source.rows);
        L = std::max(L, s->length());
    }
    auto tokens = Tensor<float>::matrix(B * L, d);
    auto pos = Tensor<float>::matrix(B * L, h);
    std::vector<std::uint8_t> valid(B * L, 0);
    std::vector<std::uint32_t> seed_rows(B);
    for (std::size_t s = 0; s < B; ++s) {
        for (std::size_t i = 0; i < seqs[s]->length(); ++i) {
            const NodeId v = seqs[s]->at(i);
            std::copy_n(tokens_source.row(v).data(), d, tokens.row(s * L + i).data());
            std::copy_n(pe.row(v).data(), h, pos.row(s * L + i).data());
            valid[s * L + i] = 1;
        }
        seed_rows[s] = static_cast<std::uint32_t>(s * L);
    }
    Var h0 = nn::add(t, project(t, model, t.constant(std::move(tokens))), t.constant(std::move(pos)));
    Var hs = nn::encoder_forward(t, h0, model.encoder, {B, L, 1}, std::span<const std::uint8_t>(valid), ctx);
    return nn::gather_rows(t, hs, std::span<const std::uint32_t>(seed_rows));
}

Tensor<float> reconstruct_sequence(nn::ModelParams<float>& model, const NodeSequence& seq,
                                   const FeatureMatrix& features, const PositionalTable& pe) {
    if (!model.has_decoders) throw InputError("feature augmentation needs a checkpoint with the feature decoder");
    check_inputs(model, features, pe);
    check_sequence(seq, features.rows);
    const std::size_t L = seq.length();
    auto tokens = Tensor<float>::matrix(L, features.cols);
    auto pos = Tensor<float>::matrix(L, pe.cols);
    for (std::size_t i = 0; i < L; ++i) {
        std::copy_n(features.row(seq.at(i)).data(), features.cols, tokens.row(i).data());
        std::copy_n(pe.row(seq.at(i)).data(), pe.cols, pos.row(i).data());
    }
    Tape<float> t(false);
    Var p = t.constant(std::move(pos));
    Var h0 = nn::add(t, project(t, model, t.constant(std::move(tokens))), p);
    Var hs = nn::encoder_forward(t, h0, model.encoder, {1, L, 1}, {}, {});
    Var z = feature_decode(t, model, nn::add(t, hs, p), {1, L, 1}, {}, {});
    return t.value(z);
}

AugmentedFeatures augment_features(nn::ModelParams<float>& model, const std::vector<NodeSequence>& seqs,
                                   const FeatureMatrix& features, const PositionalTable& pe, unsigned threads) {
    if (!model.has_decoders) throw InputError("feature augmentation needs a checkpoint with the feature decoder");
    AugmentedFeatures out{features, std::vector<std::uint8_t>(features.rows, 0)};
    const auto unique = unique_by_seed(seqs);
    parallel_chunks(unique.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const NodeSequence& seq = *unique[i];
            const Tensor<float> z = reconstruct_sequence(model, seq, features, pe);
            auto src = features.row(seq.seed);
            auto dst = out.matrix.row(seq.seed);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = (src[j] + z(0, j)) / 2.0f;
            out.augmented[seq.seed] = 1;
        }
    });
    return out;
}

std::vector<NodeId> EmbeddingTable::ids() const {
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < present.size(); ++i) {
        if (present[i]) out.push_back(static_cast<NodeId>(i));
    }
    return out;
}

EmbeddingTable embed(nn::ModelParams<float>& model, const std::vector<NodeSequence>& seqs,
                     const FeatureMatrix& features, const PositionalTable& pe, bool use_augmentation,
                     unsigned threads) {
    check_inputs(model, features, pe);
    FeatureMatrix augmented;
    if (use_augmentation) augmented = augment_features(model, seqs, features, pe, threads).matrix;
    const FeatureMatrix& source = use_augmentation ? augmented : features;
    EmbeddingTable out{DenseMatrix(features.rows, model.config.hidden), std::vector<std::uint8_t>(features.rows, 0)};
    const auto unique = unique_by_seed(seqs);
    parallel_chunks(unique.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Tape<float> t(false);
            const NodeSequence* one[] = {unique[i]};
            const auto& h = t.value(encode_seeds(t, model, one, source, pe, {}));
            std::copy_n(h.data(), h.size(), out.table.row(unique[i]->seed).data());
            out.present[unique[i]->seed] = 1;
        }
    });
    return out;
}

ProbeResult linear_probe(const DenseMatrix& embeddings, std::span<const std::uint8_t> present,
                         const LabelSet& labels, const ProbeConfig& cfg) {
    labels.validate(embeddings.rows);
    const std::size_t C = static_cast<std::size_t>(labels.num_classes), h = embeddings.cols;
    auto gather = [&](Split split, DenseMatrix& x, std::vector<int>& y) {
        const auto idx = labels.indices(split);
        x = DenseMatrix(idx.size(), h);
        y.clear();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const NodeId v = labels.nodes[idx[r]];
            if (!present.empty() && !present[v]) {
                throw InputError("labeled node " + std::to_string(v) + " has no embedding");
            }
            std::copy_n(embeddings.row(v).data(), h, x.row(r).data());
            y.push_back(labels.classes[idx[r]]);
        }
    };
    DenseMatrix xtr, xva, xte;
    std::vector<int> ytr, yva, yte;
    gather(Split::Train, xtr, ytr);
    gather(Split::Valid, xva, yva);
    gather(Split::Test, xte, yte);
    if (std::adjacent_find(ytr.begin(), ytr.end(), std::not_equal_to<>()) == ytr.end()) {
        throw InputError("linear probe needs at least two classes in the training split");
    }
    if (yte.empty()) throw InputError("linear probe needs labeled test nodes");

    Parameter<float> w("probe.weight", Tensor<float>::matrix(h, C));
    Parameter<float> b("probe.bias", Tensor<float>::vector(C));
    auto xt = Tensor<float>::matrix(xtr.rows, h);
    std::copy(xtr.data.begin(), xtr.data.end(), xt.data());
    nn::AdamW<float> opt({cfg.lr, 0.9, 0.999, 1e-8, 0.0});

    ProbeResult result;
    result.weight = w.value;
    result.bias = b.value;
    double best = -1.0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Tape<float> t;
        Var logits = nn::linear(t, t.constant(xt), t.param(w), t.param(b));
        t.backward(nn::softmax_cross_entropy(t, logits, std::span<const int>(ytr)));
        opt.step({&w, &b});
        w.zero_grad();
        b.zero_grad();
        result.epochs_run = epoch;
        const double score = yva.empty() ? 0.0 : accuracy(argmax_rows(affine_rows(xva, w.value, b.value)), yva);
        if (yva.empty() || score > best) {
            best = score;
            result.best_epoch = epoch;
            result.weight = w.value;
            result.bias = b.value;
        } else if (epoch - result.best_epoch >= cfg.patience) {
            break;
        }
    }
    result.report.task = "linear_probe";
    add_classification_metrics(result.report, "train_", affine_rows(xtr, result.weight, result.bias), ytr, C);
    add_classification_metrics(result.report, "valid_", affine_rows(xva, result.weight, result.bias), yva, C);
    add_classification_metrics(result.report, "test_", affine_rows(xte, result.weight, result.bias), yte, C);
    result.report.metrics["best_epoch"] = static_cast<double>(result.best_epoch);
    result.report.metrics["epochs_run"] = static_cast<double>(result.epochs_run);
    return result;
}

HeadType parse_head(const std::string& s) {
    if (s == "node_classification") return HeadType::NodeClassification;
    if (s == "link_prediction") return HeadType::LinkPrediction;
    throw InputError("unknown head type '" + s + "' (expected node_classification or link_prediction)");
}

std::string head_name(HeadType h) {
    return h == HeadType::NodeClassification ? "node_classification" : "link_prediction";
}

FinetuneResult finetune_node(const nn::ModelParams<float>& pretrained, const std::vector<NodeSequence>& seqs,
                             const FeatureMatrix& features, const PositionalTable& pe, const LabelSet& labels,
                             const FinetuneConfig& cfg) {
    if (cfg.head != HeadType::NodeClassification) throw InputError("node fine-tuning needs the node_classification head");
    labels.validate(features.rows);
    FinetuneResult result{pretrained, {}, {}};
    auto& model = result.model;
    check_inputs(model, features, pe);
    const FeatureMatrix source = token_source(model, seqs, features, pe, cfg.use_augmentation);
    const auto by_seed = seed_index(seqs);
    const std::size_t C = static_cast<std::size_t>(labels.num_classes), h = model.config.hidden;

    auto split_data = [&](Split split, std::vector<const NodeSequence*>& sq, std::vector<int>& y) {
        for (std::size_t i : labels.indices(split)) {
            auto it = by_seed.find(labels.nodes[i]);
            if (it == by_seed.end()) {
                throw InputError("labeled node " + std::to_string(labels.nodes[i]) + " has no sampled sequence");
            }
            sq.push_back(it->second);
            y.push_back(labels.classes[i]);
        }
    };
    std::vector<const NodeSequence*> str, sva, ste;
    std::vector<int> ytr, yva, yte;
    split_data(Split::Train, str, ytr);
    split_data(Split::Valid, sva, yva);
    split_data(Split::Test, ste, yte);
    if (str.empty()) throw InputError("fine-tuning needs labeled training nodes");

    Rng init_rng = make_stream(cfg.rng_seed, "finetune-init");
    Rng shuffle_rng = make_stream(cfg.rng_seed, "shuffle");
    Rng drop_rng = make_stream(cfg.rng_seed, "dropout");
    Parameter<float> w = normal_param("head.weight", h, C, init_rng);
    Parameter<float> b = zero_param("head.bias", C);
    auto params = model.encoder_parameters();
    params.push_back(&w);
    params.push_back(&b);
    nn::AdamW<float> opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    const nn::ForwardContext ctx{true, cfg.dropout, &drop_rng};

    auto evaluate = [&](const std::vector<const NodeSequence*>& sq) {
        return affine_rows(infer_seeds(model, sq, source, pe, cfg.batch_size), w.value, b.value);
    };

    nn::ModelParams<float> best_model = model;
    Parameter<float> best_w = w, best_b = b;
    double best = -1.0;
    std::size_t best_epoch = 0;
    std::vector<std::size_t> order(str.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const NodeSequence*> batch;
            std::vector<int> y;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(str[order[i]]);
                y.push_back(ytr[order[i]]);
            }
            Tape<float> t;
            Var hs = encode_seeds(t, model, batch, source, pe, ctx);
            Var loss = nn::softmax_cross_entropy(t, nn::linear(t, hs, t.param(w), t.param(b)), std::span<const int>(y));
            if (!std::isfinite(t.value(loss)[0])) throw std::runtime_error("non-finite fine-tuning loss");
            t.backward(loss);
            opt.step(params);
            for (auto* p : params) p->zero_grad();
        }
        const double score = sva.empty() ? 0.0 : accuracy(argmax_rows(evaluate(sva)), yva);
        if (sva.empty() || score > best) {
            best = score;
            best_epoch = epoch;
            best_model = model;
            best_w = w;
            best_b = b;
        }
    }
    model = std::move(best_model);
    w = std::move(best_w);
    b = std::move(best_b);
    result.report.task = "finetune_node_classification";
    add_classification_metrics(result.report, "valid_", evaluate(sva), yva, C);
    add_classification_metrics(result.report, "test_", evaluate(ste), yte, C);
    result.report.metrics["best_epoch"] = static_cast<double>(best_epoch);
    model.strip_decoders();
    w.zero_grad();
    b.zero_grad();
    result.head = {std::move(w), std::move(b)};
    return result;
}

namespace {

struct LinkHead {
    Parameter<float> w1, b1, w2, b2;

    std::vector<Parameter<float>*> parameters() { return {&w1, &b1, &w2, &b2}; }

    Var score(Tape<float>& t, Var hu, Var hv) {
        Var x = nn::concat_cols(t, {hu, hv, nn::mul(t, hu, hv)});
        Var a = nn::relu(t, nn::linear(t, x, t.param(w1), t.param(b1)));
        return nn::linear(t, a, t.param(w2), t.param(b2));
    }
};

// Scores of (u, v) pairs from a precomputed embedding table.
std::vector<double> score_pairs(LinkHead& head, const DenseMatrix& emb,
                                const std::vector<std::pair<NodeId, NodeId>>& pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    const std::size_t h = emb.cols;
    constexpr std::size_t chunk = 4096;
    for (std::size_t start = 0; start < pairs.size(); start += chunk) {
        const std::size_t end = std::min(pairs.size(), start + chunk);
        auto hu = Tensor<float>::matrix(end - start, h);
        auto hv = Tensor<float>::matrix(end - start, h);
        for (std::size_t i = start; i < end; ++i) {
            std::copy_n(emb.row(pairs[i].first).data(), h, hu.row(i - start).data());
            std::copy_n(emb.row(pairs[i].second).data(), h, hv.row(i - start).data());
        }
        Tape<float> t(false);
        const auto& s = t.value(head.score(t, t.constant(std::move(hu)), t.constant(std::move(hv))));
        for (std::size_t i = 0; i < s.size(); ++i) out.push_back(s[i]);
    }
    return out;
}

struct RankingTask {
    std::vector<std::pair<NodeId, NodeId>> positives;
    // eval_negatives partners per positive.
    std::vector<std::vector<NodeId>> negatives;
};

RankingTask build_ranking(const Graph& g, const std::vector<std::pair<NodeId, NodeId>>& positives,
                          const std::vector<NodeId>& candidates, std::size_t per_positive, Rng& rng) {
    RankingTask task;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.empty() ? 0 : candidates.size() - 1);
    for (const auto& [u, v] : positives) {
        const auto nbrs = g.out_neighbors(u);
        std::vector<NodeId> negs;
        std::size_t tries = 0;
        while (negs.size() < per_positive && tries < 100 * per_positive && !candidates.empty()) {
            ++tries;
            const NodeId w = candidates[pick(rng)];
            if (w == u || w == v || std::binary_search(nbrs.begin(), nbrs.end(), w)) continue;
            negs.push_back(w);
        }
        if (negs.empty()) continue;
        task.positives.emplace_back(u, v);
        task.negatives.push_back(std::move(negs));
    }
    return task;
}

RankSummary evaluate_ranking(LinkHead& head, const DenseMatrix& emb, const RankingTask& task) {
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (std::size_t i = 0; i < task.positives.size(); ++i) {
        pairs.push_back(task.positives[i]);
        for (NodeId w : task.negatives[i]) pairs.emplace_back(task.positives[i].first, w);
    }
    const auto scores = score_pairs(head, emb, pairs);
    std::vector<RankMetrics> ranks;
    std::size_t k = 0;
    for (std::size_t i = 0; i < task.positives.size(); ++i) {
        const double pos = scores[k++];
        std::vector<double> neg(scores.begin() + static_cast<std::ptrdiff_t>(k),
                                scores.begin() + static_cast<std::ptrdiff_t>(k + task.negatives[i].size()));
        k += task.negatives[i].size();
        ranks.push_back(rank_metrics(pos, neg));
    }
    return summarize_ranks(ranks);
}

void put_ranks(EvalReport& report, const std::string& prefix, const RankSummary& s) {
    if (s.count == 0) return;
    report.metrics[prefix + "hits@1"] = s.hits1;
    report.metrics[prefix + "hits@3"] = s.hits3;
    report.metrics[prefix + "hits@5"] = s.hits5;
    report.metrics[prefix + "hits@10"] = s.hits10;
    report.metrics[prefix + "mrr"] = s.mrr;
}

}  // namespace

FinetuneResult finetune_link(const nn::ModelParams<float>& pretrained, const Graph& g,
                             const std::vector<NodeSequence>& seqs, const FeatureMatrix& features,
                             const PositionalTable& pe, const std::vector<EdgeLabel>& edges, const FinetuneConfig& cfg) {
    if (cfg.head != HeadType::LinkPrediction) throw InputError("link fine-tuning needs the link_prediction head");
    if (g.num_nodes() != features.rows) {
        throw InputError("graph has " + std::to_string(g.num_nodes()) + " nodes, features have " +
                         std::to_string(features.rows) + " rows");
    }
    FinetuneResult result{pretrained, {}, {}};
    auto& model = result.model;
    check_inputs(model, features, pe);
    const FeatureMatrix source = token_source(model, seqs, features, pe, cfg.use_augmentation);
    const auto by_seed = seed_index(seqs);
    auto seq_of = [&](NodeId v) {
        auto it = by_seed.find(v);
        if (it == by_seed.end()) throw InputError("edge endpoint " + std::to_string(v) + " has no sampled sequence");
        return it->second;
    };

    std::vector<std::pair<NodeId, NodeId>> train_pos, train_neg, valid_pos, test_pos;
    std::vector<std::pair<NodeId, NodeId>> test_labeled;
    std::vector<int> test_labels;
    for (const auto& e : edges) {
        seq_of(e.u);
        seq_of(e.v);
        if (e.split == Split::Train) (e.positive ? train_pos : train_neg).emplace_back(e.u, e.v);
        if (e.split == Split::Valid && e.positive) valid_pos.emplace_back(e.u, e.v);
        if (e.split == Split::Test) {
            if (e.positive) test_pos.emplace_back(e.u, e.v);
            test_labeled.emplace_back(e.u, e.v);
            test_labels.push_back(e.positive ? 1 : 0);
        }
    }
    if (train_pos.empty()) throw InputError("link fine-tuning needs positive training edges");

    const std::size_t h = model.config.hidden;
    Rng init_rng = make_stream(cfg.rng_seed, "finetune-init");
    Rng shuffle_rng = make_stream(cfg.rng_seed, "shuffle");
    Rng drop_rng = make_stream(cfg.rng_seed, "dropout");
    Rng eval_rng = make_stream(cfg.rng_seed, "link-eval");
    LinkHead head{normal_param("head.fc1.weight", 3 * h, h, init_rng), zero_param("head.fc1.bias", h),
                  normal_param("head.fc2.weight", h, 1, init_rng), zero_param("head.fc2.bias", 1)};
    auto params = model.encoder_parameters();
    for (auto* p : head.parameters()) params.push_back(p);
    nn::AdamW<float> opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    const nn::ForwardContext ctx{true, cfg.dropout, &drop_rng};

    std::vector<NodeId> candidates;
    std::vector<const NodeSequence*> all_seqs;
    for (const auto* s : unique_by_seed(seqs)) {
        candidates.push_back(s->seed);
        all_seqs.push_back(s);
    }
    std::sort(candidates.begin(), candidates.end());
    const RankingTask valid_task = build_ranking(g, valid_pos, candidates, cfg.eval_negatives, eval_rng);
    const RankingTask test_task = build_ranking(g, test_pos, candidates, cfg.eval_negatives, eval_rng);

    auto embed_all = [&] {
        DenseMatrix emb(features.rows, h);
        const DenseMatrix rows = infer_seeds(model, all_seqs, source, pe, std::max<std::size_t>(cfg.batch_size, 64));
        for (std::size_t i = 0; i < all_seqs.size(); ++i) {
            std::copy_n(rows.row(i).data(), h, emb.row(all_seqs[i]->seed).data());
        }
        return emb;
    };

    auto adjacent = [&](NodeId u, NodeId v) {
        const auto n = g.out_neighbors(u);
        return std::binary_search(n.begin(), n.end(), v);
    };

    LinkHead best_head = head;
    nn::ModelParams<float> best_model = model;
    double best = -1.0;
    std::size_t best_epoch = 0, neg_cursor = 0;
    std::vector<std::size_t> order(train_pos.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::pair<NodeId, NodeId>> pairs;
            std::vector<float> y;
            for (std::size_t i = start; i < end; ++i) {
                pairs.push_back(train_pos[order[i]]);
                y.push_back(1.0f);
            }
            const std::size_t B = pairs.size();
            if (B >= 2) {
                for (std::size_t i = 0; i < B; ++i) {
                    const NodeId u = pairs[i].first, v = pairs[(i + 1) % B].second;
                    if (u == v || adjacent(u, v)) continue;
                    pairs.emplace_back(u, v);
                    y.push_back(0.0f);
                }
            }
            for (std::size_t i = 0; i < B && !train_neg.empty(); ++i) {
                pairs.push_back(train_neg[neg_cursor++ % train_neg.size()]);
                y.push_back(0.0f);
            }

            std::vector<NodeId> nodes;
            for (const auto& [u, v] : pairs) {
                nodes.push_back(u);
                nodes.push_back(v);
            }
            std::sort(nodes.begin(), nodes.end());
            nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
            std::vector<const NodeSequence*> batch_seqs;
            for (NodeId v : nodes) batch_seqs.push_back(seq_of(v));
            std::vector<std::uint32_t> iu, iv;
            for (const auto& [u, v] : pairs) {
                iu.push_back(static_cast<std::uint32_t>(std::lower_bound(nodes.begin(), nodes.end(), u) - nodes.begin()));
                iv.push_back(static_cast<std::uint32_t>(std::lower_bound(nodes.begin(), nodes.end(), v) - nodes.begin()));
            }

            Tape<float> t;
            Var emb = encode_seeds(t, model, batch_seqs, source, pe, ctx);
            Var logits = head.score(t, nn::gather_rows(t, emb, std::span<const std::uint32_t>(iu)),
                                    nn::gather_rows(t, emb, std::span<const std::uint32_t>(iv)));
            Var loss = nn::bce_with_logits(t, logits, std::span<const float>(y));
            if (!std::isfinite(t.value(loss)[0])) throw std::runtime_error("non-finite fine-tuning loss");
            t.backward(loss);
            opt.step(params);
            for (auto* p : params) p->zero_grad();
        }
        double score = 0.0;
        if (!valid_task.positives.empty()) score = evaluate_ranking(head, embed_all(), valid_task).mrr;
        if (valid_task.positives.empty() || score > best) {
            best = score;
            best_epoch = epoch;
            best_model = model;
            best_head = head;
        }
    }
    model = std::move(best_model);
    head = std::move(best_head);

    result.report.task = "finetune_link_prediction";
    const DenseMatrix emb = embed_all();
    put_ranks(result.report, "valid_", evaluate_ranking(head, emb, valid_task));
    put_ranks(result.report, "test_", evaluate_ranking(head, emb, test_task));
    if (!test_labeled.empty()) {
        const auto s = score_pairs(head, emb, test_labeled);
        try {
            result.report.metrics["test_roc_auc"] = roc_auc(s, test_labels);
        } catch (const InputError& e) {
            spdlog::warn("test_roc_auc not reported: {}", e.what());
        }
    }
    result.report.metrics["best_epoch"] = static_cast<double>(best_epoch);
    model.strip_decoders();
    for (auto* p : head.parameters()) {
        p->zero_grad();
        result.head.push_back(std::move(*p));
    }
    return result;
}

}  // namespace mgt
