#include "mgt/line.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mgt/simd/kernels.hpp"

namespace mgt {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double log_sigmoid(double x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

struct NegativeSampler {
    explicit NegativeSampler(const Graph& g) {
        std::vector<double> w(g.num_nodes());
        for (NodeId v = 0; v < g.num_nodes(); ++v) w[v] = std::pow(static_cast<double>(g.out_degree(v)), 0.75);
        dist = std::discrete_distribution<NodeId>(w.begin(), w.end());
    }
    std::discrete_distribution<NodeId> dist;
};

double objective(const PositionalTable& emb, const std::vector<Edge>& edges,
                 const std::vector<std::vector<NodeId>>& negatives) {
    double total = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [u, v] = edges[e];
        total -= log_sigmoid(simd::dot(emb.row(u), emb.row(v)));
        for (NodeId k : negatives[e]) total -= log_sigmoid(-simd::dot(emb.row(u), emb.row(k)));
    }
    return total / static_cast<double>(edges.size());
}

}  // namespace

void LineConfig::validate() const {
    if (dim < 1) throw InputError("line dim must be >= 1");
    if (negatives_per_edge < 1) throw InputError("line negatives_per_edge must be >= 1");
    if (!(learning_rate >= 0.0)) throw InputError("line learning_rate must be non-negative");
}

PositionalTable zero_encoding(std::size_t n, std::size_t dim) {
    if (n < 1 || dim < 1) throw InputError("zero_encoding needs n, dim >= 1");
    return PositionalTable(n, dim, 0.0f);
}

LineResult train_line(const Graph& g, const LineConfig& cfg) {
    cfg.validate();
    if (g.num_nodes() == 0) throw InputError("LINE needs a nonempty graph");
    if (g.num_edges() == 0) throw InputError("LINE needs at least one edge");

    Rng rng = make_stream(cfg.rng_seed, "line");
    const std::size_t dim = cfg.dim;
    PositionalTable emb(g.num_nodes(), dim);
    std::uniform_real_distribution<float> init(-0.5f / static_cast<float>(dim), 0.5f / static_cast<float>(dim));
    for (float& x : emb.data) x = init(rng);

    const std::vector<Edge> edges = g.edge_list();
    NegativeSampler sampler(g);

    // Fixed negatives for loss tracking, from their own stream.
    Rng eval_rng = make_stream(cfg.rng_seed, "line-eval");
    std::vector<std::vector<NodeId>> eval_neg(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        for (std::size_t k = 0; k < cfg.negatives_per_edge; ++k) {
            const NodeId c = sampler.dist(eval_rng);
            if (c != edges[e].first && c != edges[e].second) eval_neg[e].push_back(c);
        }
    }

    LineResult result;
    result.loss.push_back(objective(emb, edges, eval_neg));

    const double total_steps = static_cast<double>(cfg.epochs * edges.size());
    std::size_t step = 0;
    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> err(dim);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
            const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - static_cast<double>(step) / total_steps);
            ++step;
            const auto [u, v] = edges[idx];
            std::fill(err.begin(), err.end(), 0.0f);
            auto src = emb.row(u);
            // Positive target first, then negatives; a negative that hits
            // either endpoint is skipped.
            for (std::size_t d = 0; d <= cfg.negatives_per_edge; ++d) {
                NodeId target = v;
                double label = 1.0;
                if (d > 0) {
                    target = sampler.dist(rng);
                    if (target == u || target == v) continue;
                    label = 0.0;
                }
                auto tgt = emb.row(target);
                const double grad = (label - sigmoid(simd::dot(src, tgt))) * lr;
                simd::axpy(static_cast<float>(grad), tgt, std::span<float>(err));
                simd::axpy(static_cast<float>(grad), std::span<const float>(src), tgt);
            }
            simd::axpy(1.0f, std::span<const float>(err), src);
        }
        result.loss.push_back(objective(emb, edges, eval_neg));
    }
    result.table = std::move(emb);
    return result;
}

}  // namespace mgt
