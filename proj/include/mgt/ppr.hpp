#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "mgt/graph.hpp"

namespace mgt {

// `alpha` multiplies P^T r in r = (1 - alpha) e_seed + alpha P^T r, so the
// teleport probability is 1 - alpha.
struct PPRConfig {
    double alpha = 0.85;
    double epsilon = 1e-5;
    int max_iters = 10000;
    std::size_t top_k = 128;

    void validate() const;
};

// Sparse PPR scores for one seed, sorted by node id. Scores are kept in double
// so the power-iteration oracle can be checked against closed forms; they are
// narrowed to float only when written into a NodeSequence.
struct PPRVector {
    NodeId seed = 0;
    std::vector<std::pair<NodeId, double>> entries;
    // Nodes whose estimate or residual was modified (forward push only).
    std::size_t touched = 0;

    double score(NodeId v) const;
    double total() const;
};

struct ScoredNode {
    NodeId node = 0;
    float score = 0.0f;

    friend bool operator==(const ScoredNode&, const ScoredNode&) = default;
};

// S_s = (seed) followed by the context in descending score order.
struct NodeSequence {
    NodeId seed = 0;
    std::vector<ScoredNode> context;

    std::size_t length() const noexcept { return 1 + context.size(); }
    NodeId at(std::size_t pos) const { return pos == 0 ? seed : context[pos - 1].node; }

    friend bool operator==(const NodeSequence&, const NodeSequence&) = default;
};

// Dense power iteration; dangling nodes keep their mass (implicit self-loop).
// Stops when the max-norm change drops below epsilon * 1e-2. Throws
// std::runtime_error (with the last residual) after max_iters.
PPRVector ppr_power_iteration(const Graph& g, NodeId seed, const PPRConfig& cfg);

// Reusable O(N) scratch space for forward push; one per worker thread.
class PushWorkspace {
public:
    explicit PushWorkspace(std::size_t n) : estimate_(n, 0.0), residual_(n, 0.0), queued_(n, 0) {}

    PPRVector run(const Graph& g, NodeId seed, const PPRConfig& cfg);

private:
    std::vector<double> estimate_;
    std::vector<double> residual_;
    std::vector<std::uint8_t> queued_;
    std::vector<NodeId> touched_;
    std::vector<NodeId> queue_;
};

// Local push: while some u has residual > epsilon * d_out(u), move
// (1 - alpha) of it into the estimate and spread alpha of it over the
// out-neighbors. FIFO order makes the result deterministic.
PPRVector ppr_forward_push(const Graph& g, NodeId seed, const PPRConfig& cfg);

// Up to top_k non-seed nodes with positive score, by descending score, ties
// broken by ascending node id.
NodeSequence top_k_sequence(const PPRVector& r, const PPRConfig& cfg);

// One sequence per seed, in input order. Work is split into contiguous seed
// ranges per thread, so the output does not depend on `threads`.
std::vector<NodeSequence> sample_sequences(const Graph& g, std::span<const NodeId> seeds, const PPRConfig& cfg,
                                           unsigned threads = 1);

// "MGTS" v1: count u64, then per sequence: seed u64, len u32,
// len x (node u64, score f32). `len` counts context nodes only.
void save_sequences(const std::vector<NodeSequence>& seqs, const std::filesystem::path& path);
std::vector<NodeSequence> load_sequences(const std::filesystem::path& path,
                                         std::optional<std::size_t> num_nodes = std::nullopt);

}  // namespace mgt
