#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgt/downstream.hpp"

namespace mgt {

enum class BenchMode { PprSequence, FullNeighborhood };

BenchMode parse_bench_mode(const std::string& s);
std::string bench_mode_name(BenchMode m);

struct BenchConfig {
    std::vector<BenchMode> modes{BenchMode::PprSequence, BenchMode::FullNeighborhood};
    PPRConfig ppr;
    std::size_t hops = 2;
    // Token cap for the full-neighborhood sequence (seed token included).
    std::size_t full_cap = 256;
    std::size_t num_seeds = 100;
    std::uint64_t rng_seed = 0;
};

struct BenchRecord {
    BenchMode mode = BenchMode::PprSequence;
    NodeId seed = 0;
    std::size_t nodes_touched = 0;
    double micros = 0;
};

struct BenchModeSummary {
    double mean_nodes_touched = 0;
    double max_nodes_touched = 0;
    double mean_micros = 0;
    double total_micros = 0;
    // Linear-probe test accuracy on this mode's embeddings, when labels are given.
    std::optional<double> probe_accuracy;
};

struct BenchReport {
    std::vector<NodeId> seeds;
    std::vector<BenchRecord> records;
    std::map<BenchMode, BenchModeSummary> summary;
    // PPR sequences are computed before the timed loop; their cost is reported here.
    double ppr_sampling_micros = 0;
};

// Per-seed inference timing.
//   ppr_sequence:      gather the k+1 rows of a precomputed PPR sequence and encode.
//   full_neighborhood: BFS to `hops`, seed token = mean feature over the whole
//                      neighborhood, remaining tokens in (hop, id) order up to
//                      full_cap, then encode. Everything inside the timer.
// Seeds: labeled nodes when `labels` is given (up to num_seeds), otherwise a
// uniform sample of num_seeds nodes.
BenchReport benchmark_inference(const Graph& g, const FeatureMatrix& features, const PositionalTable& pe,
                                nn::ModelParams<float>& model, const BenchConfig& cfg,
                                const LabelSet* labels = nullptr);

std::string bench_csv(const BenchReport& report);

}  // namespace mgt
