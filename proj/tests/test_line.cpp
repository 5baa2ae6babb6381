#include <cmath>
#include <cstring>

#include "doctest.h"
#include "mgt/line.hpp"
#include "mgt/simd/kernels.hpp"
#include "test_util.hpp"

using namespace mgt;

namespace {

LineConfig cfg(std::size_t dim, std::size_t epochs, double lr, std::uint64_t seed = 1) {
    LineConfig c;
    c.dim = dim;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.negatives_per_edge = 5;
    c.rng_seed = seed;
    return c;
}

double dot(const PositionalTable& t, NodeId a, NodeId b) { return simd::dot(t.row(a), t.row(b)); }

}  // namespace

TEST_CASE("LINE pair graph separates the edge") {
    auto r = train_line(test::pair_graph(), cfg(4, 3000, 0.5));
    CHECK(1.0 / (1.0 + std::exp(-dot(r.table, 0, 1))) > 0.9);
}

TEST_CASE("LINE two cliques: intra dot exceeds inter dot") {
    std::vector<Edge> e;
    for (NodeId a = 0; a < 6; ++a) {
        for (NodeId b = a + 1; b < 6; ++b) {
            e.emplace_back(a, b);
            e.emplace_back(a + 6, b + 6);
        }
    }
    Graph g = Graph::from_edges(12, e, true);
    auto r = train_line(g, cfg(8, 200, 0.05));
    double intra = 0, inter = 0;
    int ni = 0, nx = 0;
    for (NodeId a = 0; a < 12; ++a) {
        for (NodeId b = a + 1; b < 12; ++b) {
            if ((a < 6) == (b < 6)) {
                intra += dot(r.table, a, b);
                ++ni;
            } else {
                inter += dot(r.table, a, b);
                ++nx;
            }
        }
    }
    CHECK(intra / ni > inter / nx);
}

TEST_CASE("LINE epochs=0 returns the initialization, inside the init range") {
    auto r = train_line(test::cycle3(), cfg(5, 0, 0.025, 9));
    CHECK(r.loss.size() == 1);
    for (float x : r.table.data) CHECK(std::abs(x) <= 0.5f / 5.0f);
    auto again = train_line(test::cycle3(), cfg(5, 0, 0.025, 9));
    CHECK(again.table.data == r.table.data);
}

TEST_CASE("LINE loss decreases and training is deterministic") {
    std::mt19937_64 rng(4);
    Graph g = test::erdos_renyi(60, 0.1, rng);
    auto a = train_line(g, cfg(16, 5, 0.025, 3));
    auto b = train_line(g, cfg(16, 5, 0.025, 3));
    CHECK(a.loss.back() < a.loss.front());
    CHECK(std::memcmp(a.table.data.data(), b.table.data.data(), a.table.data.size() * sizeof(float)) == 0);
    auto c = train_line(g, cfg(16, 5, 0.025, 4));
    CHECK(c.table.data != a.table.data);
}

TEST_CASE("LINE errors and zero encoding") {
    Graph empty = Graph::from_edges(3, {}, true);
    CHECK_THROWS_AS(train_line(empty, cfg(4, 1, 0.1)), InputError);
    auto bad = cfg(4, 1, 0.1);
    bad.negatives_per_edge = 0;
    CHECK_THROWS_AS(train_line(test::pair_graph(), bad), InputError);

    auto z = zero_encoding(3, 4);
    CHECK(z.rows == 3);
    CHECK(z.cols == 4);
    for (float x : z.data) CHECK(x == 0.0f);
}
