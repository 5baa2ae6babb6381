#include "mgt/ppr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "mgt/io.hpp"

namespace mgt {

void PPRConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("ppr alpha must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw InputError("ppr epsilon must be positive");
    if (max_iters < 1) throw InputError("ppr max_iters must be positive");
    if (top_k < 1) throw InputError("ppr top_k must be at least 1");
}

double PPRVector::score(NodeId v) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), v,
                               [](const auto& e, NodeId id) { return e.first < id; });
    return (it != entries.end() && it->first == v) ? it->second : 0.0;
}

double PPRVector::total() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.second;
    return s;
}

PPRVector ppr_power_iteration(const Graph& g, NodeId seed, const PPRConfig& cfg) {
    cfg.validate();
    const std::size_t n = g.num_nodes();
    if (seed >= n) throw std::out_of_range("seed out of range");

    std::vector<double> r(n, 0.0), next(n, 0.0);
    r[seed] = 1.0;
    const double tol = cfg.epsilon * 1e-2;
    double change = 0.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        next[seed] = 1.0 - cfg.alpha;
        for (NodeId u = 0; u < n; ++u) {
            if (r[u] == 0.0) continue;
            auto nbrs = g.out_neighbors(u);
            if (nbrs.empty()) {
                next[u] += cfg.alpha * r[u];
                continue;
            }
            const double share = cfg.alpha * r[u] / static_cast<double>(nbrs.size());
            for (NodeId v : nbrs) next[v] += share;
        }
        change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - r[i]));
        r.swap(next);
        if (change < tol) {
            PPRVector out;
            out.seed = seed;
            for (NodeId v = 0; v < n; ++v) {
                if (r[v] > 0.0) out.entries.emplace_back(v, r[v]);
            }
            out.touched = out.entries.size();
            return out;
        }
    }
    std::ostringstream msg;
    msg << "power iteration did not converge in " << cfg.max_iters << " iterations (residual " << change << ")";
    throw std::runtime_error(msg.str());
}

PPRVector PushWorkspace::run(const Graph& g, NodeId seed, const PPRConfig& cfg) {
    if (seed >= g.num_nodes()) throw std::out_of_range("seed out of range");
    if (estimate_.size() != g.num_nodes()) throw std::invalid_argument("workspace sized for a different graph");

    auto touch = [&](NodeId v) {
        if (estimate_[v] == 0.0 && residual_[v] == 0.0 && !queued_[v]) touched_.push_back(v);
    };
    auto over_threshold = [&](NodeId v) {
        const double deg = static_cast<double>(std::max<std::size_t>(g.out_degree(v), 1));
        return residual_[v] > cfg.epsilon * deg;
    };

    touched_.clear();
    queue_.clear();
    touch(seed);
    residual_[seed] = 1.0;
    queue_.push_back(seed);
    queued_[seed] = 1;

    for (std::size_t head = 0; head < queue_.size(); ++head) {
        const NodeId u = queue_[head];
        queued_[u] = 0;
        const double q = residual_[u];
        if (!over_threshold(u)) continue;
        residual_[u] = 0.0;
        auto nbrs = g.out_neighbors(u);
        if (nbrs.empty()) {
            // An implicit self-loop returns alpha*q to u forever; the
            // geometric series puts all of q into the estimate.
            estimate_[u] += q;
            continue;
        }
        estimate_[u] += (1.0 - cfg.alpha) * q;
        const double share = cfg.alpha * q / static_cast<double>(nbrs.size());
        for (NodeId v : nbrs) {
            touch(v);
            residual_[v] += share;
            if (!queued_[v] && over_threshold(v)) {
                queued_[v] = 1;
                queue_.push_back(v);
            }
        }
    }

    PPRVector out;
    out.seed = seed;
    out.touched = touched_.size();
    std::sort(touched_.begin(), touched_.end());
    for (NodeId v : touched_) {
        if (estimate_[v] > 0.0) out.entries.emplace_back(v, estimate_[v]);
        estimate_[v] = 0.0;
        residual_[v] = 0.0;
        queued_[v] = 0;
    }
    return out;
}

PPRVector ppr_forward_push(const Graph& g, NodeId seed, const PPRConfig& cfg) {
    cfg.validate();
    PushWorkspace ws(g.num_nodes());
    return ws.run(g, seed, cfg);
}

NodeSequence top_k_sequence(const PPRVector& r, const PPRConfig& cfg) {
    std::vector<std::pair<NodeId, double>> cand;
    cand.reserve(r.entries.size());
    for (const auto& e : r.entries) {
        if (e.first != r.seed && e.second > 0.0) cand.push_back(e);
    }
    auto better = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    const std::size_t k = std::min(cfg.top_k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), better);

    NodeSequence seq;
    seq.seed = r.seed;
    seq.context.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        seq.context.push_back({cand[i].first, static_cast<float>(cand[i].second)});
    }
    return seq;
}

std::vector<NodeSequence> sample_sequences(const Graph& g, std::span<const NodeId> seeds, const PPRConfig& cfg,
                                           unsigned threads) {
    cfg.validate();
    for (NodeId s : seeds) {
        if (s >= g.num_nodes()) throw InputError("seed " + std::to_string(s) + " out of range");
    }
    std::vector<NodeSequence> out(seeds.size());
    if (seeds.empty()) return out;

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
    auto work = [&](std::size_t begin, std::size_t end) {
        PushWorkspace ws(g.num_nodes());
        for (std::size_t i = begin; i < end; ++i) out[i] = top_k_sequence(ws.run(g, seeds[i], cfg), cfg);
    };
    if (threads == 1) {
        work(0, seeds.size());
        return out;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (seeds.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(seeds.size(), begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
    return out;
}

void save_sequences(const std::vector<NodeSequence>& seqs, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    out.write("MGTS", 4);
    bin::put<std::uint32_t>(out, 1);
    bin::put<std::uint64_t>(out, seqs.size());
    for (const auto& s : seqs) {
        bin::put<std::uint64_t>(out, s.seed);
        bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.context.size()));
        for (const auto& c : s.context) {
            bin::put<std::uint64_t>(out, c.node);
            bin::put<float>(out, c.score);
        }
    }
    write_file_atomic(path, out.str());
}

std::vector<NodeSequence> load_sequences(const std::filesystem::path& path, std::optional<std::size_t> num_nodes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    bin::expect_magic(in, {'M', 'G', 'T', 'S'}, path.string());
    if (bin::get<std::uint32_t>(in) != 1) throw InputError(path.string() + ": unsupported version");
    const auto count = bin::get<std::uint64_t>(in);
    std::vector<NodeSequence> seqs;
    seqs.reserve(count);
    auto check = [&](std::uint64_t id) {
        if (id > UINT32_MAX || (num_nodes && id >= *num_nodes)) {
            throw InputError(path.string() + ": node id " + std::to_string(id) + " out of range");
        }
        return static_cast<NodeId>(id);
    };
    for (std::uint64_t i = 0; i < count; ++i) {
        NodeSequence s;
        s.seed = check(bin::get<std::uint64_t>(in));
        const auto len = bin::get<std::uint32_t>(in);
        s.context.resize(len);
        for (auto& c : s.context) {
            c.node = check(bin::get<std::uint64_t>(in));
            c.score = bin::get<float>(in);
        }
        seqs.push_back(std::move(s));
    }
    return seqs;
}

}  // namespace mgt
