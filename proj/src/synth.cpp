#include "mgt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace mgt {

namespace {

LabelSet random_split(const std::vector<int>& classes, int num_classes, double train, double valid, Rng& rng) {
    LabelSet labels;
    labels.num_classes = num_classes;
    std::vector<NodeId> order(classes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<NodeId>(i);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(train * static_cast<double>(order.size()));
    const auto n_valid = static_cast<std::size_t>(valid * static_cast<double>(order.size()));
    std::vector<Split> split(classes.size(), Split::Test);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < n_train) {
            split[order[i]] = Split::Train;
        } else if (i < n_train + n_valid) {
            split[order[i]] = Split::Valid;
        }
    }
    for (std::size_t v = 0; v < classes.size(); ++v) {
        labels.nodes.push_back(static_cast<NodeId>(v));
        labels.classes.push_back(classes[v]);
        labels.splits.push_back(split[v]);
    }
    return labels;
}

}  // namespace

SyntheticGraph make_sbm(const SbmConfig& cfg) {
    if (cfg.nodes < 2 || cfg.blocks < 1) throw InputError("SBM needs at least 2 nodes and 1 block");
    Rng graph_rng = make_stream(cfg.rng_seed, "sbm-edges");
    Rng feat_rng = make_stream(cfg.rng_seed, "sbm-features");
    Rng split_rng = make_stream(cfg.rng_seed, "splits");
    SyntheticGraph out;
    out.block.resize(cfg.nodes);
    for (std::size_t v = 0; v < cfg.nodes; ++v) out.block[v] = static_cast<int>(v % cfg.blocks);

    std::vector<Edge> edges;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t u = 0; u < cfg.nodes; ++u) {
        for (std::size_t v = u + 1; v < cfg.nodes; ++v) {
            const double p = out.block[u] == out.block[v] ? cfg.p_in : cfg.p_out;
            if (coin(graph_rng) < p) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
        }
    }
    out.graph = Graph::from_edges(cfg.nodes, std::move(edges), true);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<float>> means(cfg.blocks, std::vector<float>(cfg.feature_dim));
    for (auto& m : means) {
        for (auto& x : m) x = static_cast<float>(cfg.mean_scale * gauss(feat_rng));
    }
    out.features = FeatureMatrix(cfg.nodes, cfg.feature_dim);
    for (std::size_t v = 0; v < cfg.nodes; ++v) {
        for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
            out.features(v, j) = means[static_cast<std::size_t>(out.block[v])][j] +
                                 static_cast<float>(cfg.noise * gauss(feat_rng));
        }
    }
    out.labels = random_split(out.block, static_cast<int>(cfg.blocks), cfg.train_fraction, cfg.valid_fraction,
                              split_rng);
    return out;
}

SyntheticGraph make_random_graph(std::size_t nodes, double avg_degree, std::size_t feature_dim, std::uint64_t seed) {
    if (nodes < 2) throw InputError("random graph needs at least 2 nodes");
    Rng rng = make_stream(seed, "random-graph");
    const auto pairs = static_cast<std::size_t>(std::llround(avg_degree * static_cast<double>(nodes) / 2.0));
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(nodes - 1));
    std::vector<Edge> edges;
    edges.reserve(pairs);
    while (edges.size() < pairs) {
        const NodeId u = pick(rng), v = pick(rng);
        if (u != v) edges.emplace_back(u, v);
    }
    SyntheticGraph out;
    out.graph = Graph::from_edges(nodes, std::move(edges), true);
    out.features = FeatureMatrix(nodes, feature_dim);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (auto& x : out.features.data) x = gauss(rng);
    out.block.assign(nodes, 0);
    return out;
}

std::vector<EdgeLabel> make_edge_labels(const Graph& g, double train_fraction, double valid_fraction,
                                        std::uint64_t seed) {
    Rng rng = make_stream(seed, "splits");
    std::vector<Edge> pos;
    for (const auto& [u, v] : g.edge_list()) {
        if (u < v) pos.emplace_back(u, v);
    }
    std::shuffle(pos.begin(), pos.end(), rng);
    const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(pos.size()));
    const auto n_valid = static_cast<std::size_t>(valid_fraction * static_cast<double>(pos.size()));
    std::vector<EdgeLabel> out;
    std::set<Edge> used(pos.begin(), pos.end());
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(g.num_nodes() - 1));
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const Split split = i < n_train ? Split::Train : (i < n_train + n_valid ? Split::Valid : Split::Test);
        out.push_back({pos[i].first, pos[i].second, true, split});
        for (int tries = 0; tries < 100; ++tries) {
            NodeId a = pick(rng), b = pick(rng);
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            const auto nbrs = g.out_neighbors(a);
            if (std::binary_search(nbrs.begin(), nbrs.end(), b) || used.count({a, b})) continue;
            used.insert({a, b});
            out.push_back({a, b, false, split});
            break;
        }
    }
    return out;
}

}  // namespace mgt
