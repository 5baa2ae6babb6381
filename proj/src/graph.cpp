#include "mgt/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <map>
#include <unordered_set>

namespace mgt {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

std::string where(const std::filesystem::path& path, std::size_t lineno) {
    return path.string() + ":" + std::to_string(lineno);
}

}  // namespace

Graph Graph::from_edges(std::size_t n, std::vector<Edge> edges, bool undirected) {
    for (const auto& [u, v] : edges) {
        if (u >= n || v >= n) throw InputError("edge endpoint out of range");
    }
    if (undirected) {
        const std::size_t m = edges.size();
        edges.reserve(2 * m);
        for (std::size_t i = 0; i < m; ++i) {
            if (edges[i].first != edges[i].second) edges.emplace_back(edges[i].second, edges[i].first);
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    Graph g;
    g.directed_ = !undirected;
    g.offsets_.assign(n + 1, 0);
    for (const auto& e : edges) ++g.offsets_[e.first + 1];
    for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
    g.targets_.resize(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) g.targets_[i] = edges[i].second;
    g.external_ids_.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.external_ids_[i] = static_cast<std::int64_t>(i);
    return g;
}

std::span<const NodeId> Graph::out_neighbors(NodeId v) const {
    if (v >= num_nodes()) throw std::out_of_range("node id " + std::to_string(v) + " out of range");
    return std::span<const NodeId>(targets_).subspan(offsets_[v], offsets_[v + 1] - offsets_[v]);
}

std::optional<NodeId> Graph::dense_id(std::int64_t external) const {
    auto it = std::lower_bound(external_ids_.begin(), external_ids_.end(), external);
    if (it == external_ids_.end() || *it != external) return std::nullopt;
    return static_cast<NodeId>(it - external_ids_.begin());
}

std::vector<Edge> Graph::edge_list() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < num_nodes(); ++u) {
        for (NodeId v : out_neighbors(u)) out.emplace_back(u, v);
    }
    return out;
}

void Graph::validate() const {
    const std::size_t n = num_nodes();
    if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != targets_.size()) {
        throw InputError("CSR offsets do not span the target array");
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (offsets_[v + 1] < offsets_[v]) throw InputError("CSR offsets decrease");
        for (auto i = offsets_[v]; i < offsets_[v + 1]; ++i) {
            if (targets_[i] >= n) throw InputError("CSR target out of range");
            if (i > offsets_[v] && targets_[i] <= targets_[i - 1]) throw InputError("CSR targets not sorted/unique");
        }
    }
    if (!directed_) {
        for (NodeId u = 0; u < n; ++u) {
            for (NodeId v : out_neighbors(u)) {
                auto back = out_neighbors(v);
                if (!std::binary_search(back.begin(), back.end(), u)) throw InputError("undirected graph not symmetric");
            }
        }
    }
}

Graph load_edge_list(const std::filesystem::path& path, bool undirected) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open edge list " + path.string());

    std::vector<std::pair<std::int64_t, std::int64_t>> raw;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        std::istringstream fields{std::string(s)};
        std::string a, b, extra;
        std::int64_t u = 0, v = 0;
        if (!(fields >> a >> b) || (fields >> extra) || !parse_int(a, u) || !parse_int(b, v)) {
            throw InputError("malformed edge at " + where(path, lineno) + ": '" + std::string(s) + "'");
        }
        raw.emplace_back(u, v);
    }
    if (raw.empty()) throw InputError("edge list " + path.string() + " contains no edges");

    std::vector<std::int64_t> ids;
    ids.reserve(2 * raw.size());
    for (const auto& [u, v] : raw) {
        ids.push_back(u);
        ids.push_back(v);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    auto dense = [&](std::int64_t x) {
        return static_cast<NodeId>(std::lower_bound(ids.begin(), ids.end(), x) - ids.begin());
    };
    std::vector<Edge> edges;
    edges.reserve(raw.size());
    for (const auto& [u, v] : raw) edges.emplace_back(dense(u), dense(v));

    Graph g = Graph::from_edges(ids.size(), std::move(edges), undirected);
    g.external_ids_ = std::move(ids);
    return g;
}

void write_node_map(const Graph& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "# external_id dense_id\n";
    const auto ext = g.external_ids();
    for (std::size_t i = 0; i < ext.size(); ++i) out << ext[i] << ' ' << i << '\n';
}

Split parse_split(std::string_view s) {
    s = trim(s);
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw InputError("unknown split '" + std::string(s) + "'");
}

std::string_view split_name(Split s) noexcept {
    switch (s) {
        case Split::Train:
            return "train";
        case Split::Valid:
            return "valid";
        case Split::Test:
            return "test";
    }
    return "?";
}

std::vector<std::size_t> LabelSet::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == s) out.push_back(i);
    }
    return out;
}

void LabelSet::validate(std::size_t num_nodes) const {
    if (nodes.size() != classes.size() || nodes.size() != splits.size()) throw InputError("label columns differ in length");
    std::unordered_set<NodeId> seen;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] >= num_nodes) throw InputError("labeled node out of range");
        if (classes[i] < 0 || classes[i] >= num_classes) throw InputError("class index out of range");
        if (!seen.insert(nodes[i]).second) throw InputError("node labeled twice: " + std::to_string(nodes[i]));
    }
}

LabelSet load_labels(const std::filesystem::path& path, const Graph& g) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open label file " + path.string());
    LabelSet labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto cols = split_csv(s);
        std::int64_t ext = 0;
        int cls = 0;
        if (cols.size() != 3 || !parse_int(cols[0], ext) || !parse_int(cols[1], cls)) {
            if (lineno == 1) continue;  // header row
            throw InputError("malformed label row at " + where(path, lineno));
        }
        auto id = g.dense_id(ext);
        if (!id) throw InputError("label for unknown node " + std::to_string(ext) + " at " + where(path, lineno));
        if (cls < 0) throw InputError("negative class at " + where(path, lineno));
        labels.nodes.push_back(*id);
        labels.classes.push_back(cls);
        labels.splits.push_back(parse_split(cols[2]));
        labels.num_classes = std::max(labels.num_classes, cls + 1);
    }
    labels.validate(g.num_nodes());
    return labels;
}

std::vector<EdgeLabel> load_edge_labels(const std::filesystem::path& path, const Graph& g) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open edge-label file " + path.string());
    std::vector<EdgeLabel> out;
    std::map<Edge, Split> split_of;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto cols = split_csv(s);
        std::int64_t u = 0, v = 0;
        int label = 0;
        if (cols.size() != 4 || !parse_int(cols[0], u) || !parse_int(cols[1], v) || !parse_int(cols[2], label)) {
            if (lineno == 1) continue;
            throw InputError("malformed edge-label row at " + where(path, lineno));
        }
        if (label != 0 && label != 1) throw InputError("edge label must be 0 or 1 at " + where(path, lineno));
        auto du = g.dense_id(u), dv = g.dense_id(v);
        if (!du || !dv) throw InputError("edge label references unknown node at " + where(path, lineno));
        if (*du == *dv) throw InputError("edge label with u == v at " + where(path, lineno));
        const Split split = parse_split(cols[3]);
        auto [it, fresh] = split_of.emplace(Edge{std::min(*du, *dv), std::max(*du, *dv)}, split);
        if (!fresh && it->second != split) {
            throw InputError("node pair appears in two splits at " + where(path, lineno));
        }
        out.push_back({*du, *dv, label == 1, split});
    }
    return out;
}

}  // namespace mgt
