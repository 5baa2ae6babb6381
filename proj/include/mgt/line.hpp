#pragma once

#include <cstdint>
#include <vector>

#include "mgt/graph.hpp"
#include "mgt/io.hpp"

namespace mgt {

struct LineConfig {
    std::size_t dim = 64;
    std::size_t epochs = 10;
    double learning_rate = 0.025;
    std::size_t negatives_per_edge = 5;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct LineResult {
    PositionalTable table;
    // loss[0] is the objective at initialization, loss[e] after epoch e.
    // Every entry is evaluated on the same fixed negative draws.
    std::vector<double> loss;
};

// First-order LINE: maximize log s(u_i.u_j) + sum_neg log s(-u_i.u_k) over the
// edges with SGD, negatives drawn proportional to out-degree^0.75.
LineResult train_line(const Graph& g, const LineConfig& cfg);

PositionalTable zero_encoding(std::size_t n, std::size_t dim);

}  // namespace mgt
