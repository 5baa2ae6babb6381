#pragma once

#include <cstdint>
#include <vector>

#include "mgt/graph.hpp"
#include "mgt/io.hpp"

namespace mgt {

struct SbmConfig {
    std::size_t nodes = 400;
    std::size_t blocks = 2;
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t feature_dim = 32;
    // Block means are random vectors with this per-coordinate scale.
    double mean_scale = 1.0;
    double noise = 1.0;
    double train_fraction = 0.6;
    double valid_fraction = 0.2;
    std::uint64_t rng_seed = 0;
};

struct SyntheticGraph {
    Graph graph;
    FeatureMatrix features;
    std::vector<int> block;
    LabelSet labels;
};

// Undirected stochastic block model, node i in block i % blocks. Features are
// the block mean plus Gaussian noise; labels are the blocks with a random
// train/valid/test split.
SyntheticGraph make_sbm(const SbmConfig& cfg);

// Undirected uniform random graph with about `avg_degree` out-neighbors per
// node and Gaussian features.
SyntheticGraph make_random_graph(std::size_t nodes, double avg_degree, std::size_t feature_dim, std::uint64_t seed);

// Edge-label set for link prediction: every edge is split into train/valid/test
// with the given fractions, plus one sampled non-edge per edge as a negative.
std::vector<EdgeLabel> make_edge_labels(const Graph& g, double train_fraction, double valid_fraction,
                                        std::uint64_t seed);

}  // namespace mgt
