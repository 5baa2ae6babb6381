#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mgt/graph.hpp"
#include "mgt/io.hpp"

namespace mgt::test {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("mgt_" + tag + "_" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Graph pair_graph() { return Graph::from_edges(2, {{0, 1}}, true); }

inline Graph cycle3() { return Graph::from_edges(3, {{0, 1}, {1, 2}, {2, 0}}, false); }

inline Graph star(std::size_t leaves) {
    std::vector<Edge> e;
    for (NodeId i = 1; i <= leaves; ++i) e.emplace_back(0, i);
    return Graph::from_edges(leaves + 1, e, true);
}

inline Graph erdos_renyi(std::size_t n, double p, std::mt19937_64& rng, bool undirected = true) {
    std::bernoulli_distribution coin(p);
    std::vector<Edge> e;
    for (NodeId u = 0; u < n; ++u) {
        for (NodeId v = undirected ? u + 1 : 0; v < n; ++v) {
            if (u != v && coin(rng)) e.emplace_back(u, v);
        }
    }
    return Graph::from_edges(n, e, undirected);
}

inline FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    FeatureMatrix x(n, d);
    for (auto& v : x.data) v = nd(rng);
    return x;
}

// Exact PPR by Gaussian elimination on (I - alpha P^T) r = (1 - alpha) e_seed,
// dangling nodes treated as self-loops.
inline std::vector<double> ppr_exact(const Graph& g, NodeId seed, double alpha) {
    const std::size_t n = g.num_nodes();
    std::vector<double> a(n * (n + 1), 0.0);
    auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * (n + 1) + c]; };
    for (std::size_t i = 0; i < n; ++i) at(i, i) = 1.0;
    for (NodeId u = 0; u < n; ++u) {
        auto nb = g.out_neighbors(u);
        if (nb.empty()) {
            at(u, u) -= alpha;
            continue;
        }
        for (NodeId v : nb) at(v, u) -= alpha / static_cast<double>(nb.size());
    }
    at(seed, n) = 1.0 - alpha;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(at(r, col)) > std::abs(at(piv, col))) piv = r;
        }
        for (std::size_t c = 0; c <= n; ++c) std::swap(at(col, c), at(piv, c));
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || at(r, col) == 0.0) continue;
            const double f = at(r, col) / at(col, col);
            for (std::size_t c = col; c <= n; ++c) at(r, c) -= f * at(col, c);
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = at(i, n) / at(i, i);
    return x;
}

}  // namespace mgt::test
