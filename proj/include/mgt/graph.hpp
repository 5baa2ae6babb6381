#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mgt/common.hpp"

namespace mgt {

using Edge = std::pair<NodeId, NodeId>;

// Immutable CSR adjacency. Targets within each node's range are sorted
// ascending and unique (A_ij is 0/1). Self-loops are kept as given.
class Graph {
public:
    Graph() = default;

    // Builds a graph over dense ids [0, n). With `undirected`, each edge is
    // inserted in both directions before deduplication.
    static Graph from_edges(std::size_t n, std::vector<Edge> edges, bool undirected);

    std::size_t num_nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t num_edges() const noexcept { return targets_.size(); }
    bool directed() const noexcept { return directed_; }

    // Throws std::out_of_range for v >= N.
    std::span<const NodeId> out_neighbors(NodeId v) const;
    std::size_t out_degree(NodeId v) const { return out_neighbors(v).size(); }

    std::span<const std::uint64_t> offsets() const noexcept { return offsets_; }
    std::span<const NodeId> targets() const noexcept { return targets_; }

    // Dense id -> external id as found in the source file.
    std::span<const std::int64_t> external_ids() const noexcept { return external_ids_; }
    std::optional<NodeId> dense_id(std::int64_t external) const;

    std::vector<Edge> edge_list() const;

    // Throws InputError if any CSR invariant is violated.
    void validate() const;

private:
    std::vector<std::uint64_t> offsets_;
    std::vector<NodeId> targets_;
    std::vector<std::int64_t> external_ids_;
    bool directed_ = true;

    friend Graph load_edge_list(const std::filesystem::path&, bool);
};

// Text edge list, "<src> <dst>" per line, '#' comments. External ids are
// remapped to dense ids in ascending external-id order.
Graph load_edge_list(const std::filesystem::path& path, bool undirected);

// "external_id dense_id" per line.
void write_node_map(const Graph& g, const std::filesystem::path& path);

enum class Split : std::uint8_t { Train, Valid, Test };

Split parse_split(std::string_view s);
std::string_view split_name(Split s) noexcept;

struct LabelSet {
    std::vector<NodeId> nodes;
    std::vector<int> classes;
    std::vector<Split> splits;
    int num_classes = 0;

    std::size_t size() const noexcept { return nodes.size(); }
    std::vector<std::size_t> indices(Split s) const;
    void validate(std::size_t num_nodes) const;
};

struct EdgeLabel {
    NodeId u = 0;
    NodeId v = 0;
    bool positive = false;
    Split split = Split::Train;
};

// CSV "node_id,class,split"; ids are external and mapped through `g`.
LabelSet load_labels(const std::filesystem::path& path, const Graph& g);

// CSV "u,v,label,split" with label in {0,1}.
std::vector<EdgeLabel> load_edge_labels(const std::filesystem::path& path, const Graph& g);

}  // namespace mgt
