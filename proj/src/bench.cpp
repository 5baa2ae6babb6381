#include "mgt/bench.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <sstream>

#include "mgt/simd/kernels.hpp"

namespace mgt {

using nn::Tape;
using nn::Tensor;

BenchMode parse_bench_mode(const std::string& s) {
    if (s == "ppr_sequence") return BenchMode::PprSequence;
    if (s == "full_neighborhood") return BenchMode::FullNeighborhood;
    throw InputError("unknown benchmark mode '" + s + "' (expected ppr_sequence or full_neighborhood)");
}

std::string bench_mode_name(BenchMode m) {
    return m == BenchMode::PprSequence ? "ppr_sequence" : "full_neighborhood";
}

namespace {

using Clock = std::chrono::steady_clock;

// Encodes one token sequence and returns the seed row.
std::vector<float> encode_tokens(nn::ModelParams<float>& model, Tensor<float> tokens, Tensor<float> pos) {
    const std::size_t L = tokens.rows();
    Tape<float> t(false);
    nn::Var h0 = nn::add(t, project(t, model, t.constant(std::move(tokens))), t.constant(std::move(pos)));
    const auto& h = t.value(nn::encoder_forward(t, h0, model.encoder, {1, L, 1}, {}, {}));
    return {h.row(0).begin(), h.row(0).end()};
}

class NeighborhoodWorkspace {
public:
    explicit NeighborhoodWorkspace(std::size_t n) : seen_(n, 0) {}

    // Nodes within `hops` of the seed in (hop, id) order, seed first.
    const std::vector<NodeId>& collect(const Graph& g, NodeId seed, std::size_t hops) {
        for (NodeId v : order_) seen_[v] = 0;
        order_.clear();
        order_.push_back(seed);
        seen_[seed] = 1;
        std::size_t begin = 0;
        for (std::size_t hop = 0; hop < hops; ++hop) {
            const std::size_t end = order_.size();
            for (std::size_t i = begin; i < end; ++i) {
                for (NodeId w : g.out_neighbors(order_[i])) {
                    if (!seen_[w]) {
                        seen_[w] = 1;
                        order_.push_back(w);
                    }
                }
            }
            std::sort(order_.begin() + static_cast<std::ptrdiff_t>(end), order_.end());
            begin = end;
        }
        return order_;
    }

private:
    std::vector<std::uint8_t> seen_;
    std::vector<NodeId> order_;
};

std::vector<NodeId> choose_seeds(const Graph& g, const BenchConfig& cfg, const LabelSet* labels) {
    std::vector<NodeId> pool;
    if (labels) {
        pool = labels->nodes;
    } else {
        pool.resize(g.num_nodes());
        std::iota(pool.begin(), pool.end(), 0u);
    }
    if (pool.size() > cfg.num_seeds) {
        Rng rng = make_stream(cfg.rng_seed, "seeds");
        for (std::size_t i = 0; i < cfg.num_seeds; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(cfg.num_seeds);
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::optional<double> probe_mode(const DenseMatrix& emb, const std::vector<std::uint8_t>& present,
                                 const LabelSet& labels) {
    LabelSet sub;
    sub.num_classes = labels.num_classes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!present[labels.nodes[i]]) continue;
        sub.nodes.push_back(labels.nodes[i]);
        sub.classes.push_back(labels.classes[i]);
        sub.splits.push_back(labels.splits[i]);
    }
    try {
        const auto r = linear_probe(emb, present, sub, ProbeConfig{});
        return r.report.metrics.at("test_accuracy");
    } catch (const InputError& e) {
        spdlog::warn("benchmark probe skipped: {}", e.what());
        return std::nullopt;
    }
}

}  // namespace

BenchReport benchmark_inference(const Graph& g, const FeatureMatrix& features, const PositionalTable& pe,
                                nn::ModelParams<float>& model, const BenchConfig& cfg, const LabelSet* labels) {
    cfg.ppr.validate();
    if (cfg.modes.empty()) throw InputError("no benchmark mode requested");
    if (cfg.full_cap < 1) throw InputError("full_cap must be >= 1");
    if (g.num_nodes() != features.rows) {
        throw InputError("graph has " + std::to_string(g.num_nodes()) + " nodes, features have " +
                         std::to_string(features.rows) + " rows");
    }
    if (features.cols != model.config.in_dim || pe.cols != model.config.hidden || pe.rows != features.rows) {
        throw InputError("features / positional table do not match the checkpoint layout");
    }
    const std::size_t d = features.cols, h = pe.cols;
    BenchReport report;
    report.seeds = choose_seeds(g, cfg, labels);

    std::vector<NodeSequence> seqs;
    const bool want_ppr =
        std::find(cfg.modes.begin(), cfg.modes.end(), BenchMode::PprSequence) != cfg.modes.end();
    if (want_ppr) {
        const auto t0 = Clock::now();
        seqs = sample_sequences(g, report.seeds, cfg.ppr, 1);
        report.ppr_sampling_micros = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    }

    NeighborhoodWorkspace ws(g.num_nodes());
    for (BenchMode mode : cfg.modes) {
        DenseMatrix emb(features.rows, h);
        std::vector<std::uint8_t> present(features.rows, 0);
        BenchModeSummary summary;
        for (std::size_t i = 0; i < report.seeds.size(); ++i) {
            const NodeId seed = report.seeds[i];
            BenchRecord rec{mode, seed, 0, 0.0};
            std::vector<float> out;
            const auto t0 = Clock::now();
            if (mode == BenchMode::PprSequence) {
                const NodeSequence& s = seqs[i];
                const std::size_t L = s.length();
                auto tokens = Tensor<float>::matrix(L, d);
                auto pos = Tensor<float>::matrix(L, h);
                for (std::size_t j = 0; j < L; ++j) {
                    std::copy_n(features.row(s.at(j)).data(), d, tokens.row(j).data());
                    std::copy_n(pe.row(s.at(j)).data(), h, pos.row(j).data());
                }
                out = encode_tokens(model, std::move(tokens), std::move(pos));
                rec.nodes_touched = L;
            } else {
                const auto& hood = ws.collect(g, seed, cfg.hops);
                const std::size_t L = std::min(cfg.full_cap, hood.size());
                auto tokens = Tensor<float>::matrix(L, d);
                auto pos = Tensor<float>::matrix(L, h);
                auto mean = tokens.row(0);
                for (NodeId v : hood) simd::axpy(1.0f, features.row(v), mean);
                simd::scale(1.0f / static_cast<float>(hood.size()), mean);
                std::copy_n(pe.row(seed).data(), h, pos.row(0).data());
                for (std::size_t j = 1; j < L; ++j) {
                    std::copy_n(features.row(hood[j]).data(), d, tokens.row(j).data());
                    std::copy_n(pe.row(hood[j]).data(), h, pos.row(j).data());
                }
                out = encode_tokens(model, std::move(tokens), std::move(pos));
                rec.nodes_touched = hood.size();
            }
            rec.micros = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
            std::copy(out.begin(), out.end(), emb.row(seed).begin());
            present[seed] = 1;
            summary.mean_nodes_touched += static_cast<double>(rec.nodes_touched);
            summary.max_nodes_touched = std::max(summary.max_nodes_touched, static_cast<double>(rec.nodes_touched));
            summary.total_micros += rec.micros;
            report.records.push_back(rec);
        }
        const double n = std::max<double>(1.0, static_cast<double>(report.seeds.size()));
        summary.mean_nodes_touched /= n;
        summary.mean_micros = summary.total_micros / n;
        if (labels) summary.probe_accuracy = probe_mode(emb, present, *labels);
        report.summary[mode] = summary;
    }
    return report;
}

std::string bench_csv(const BenchReport& report) {
    std::ostringstream out;
    out.precision(12);
    out << "mode,seed,nodes_touched,micros\n";
    for (const auto& r : report.records) {
        out << bench_mode_name(r.mode) << ',' << r.seed << ',' << r.nodes_touched << ',' << r.micros << '\n';
    }
    return out.str();
}

}  // namespace mgt
