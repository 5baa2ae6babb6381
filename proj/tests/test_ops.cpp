#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mgt/nn/ops.hpp"

using namespace mgt;
using namespace mgt::nn;
using mgt::test::grad_check;
using mgt::test::random_tensor;
using mgt::test::reduce;

namespace {

constexpr double kTol = 1e-6;

// Dense reference: softmax(Q K^T / sqrt(dh) with -inf on invalid keys) V per
// sequence and head.
Tensor<double> attention_reference(const Tensor<double>& Q, const Tensor<double>& K, const Tensor<double>& V,
                                   std::size_t batch, std::size_t len, std::size_t heads,
                                   const std::vector<std::uint8_t>& valid) {
    const std::size_t D = Q.cols(), dh = D / heads;
    auto out = Tensor<double>::matrix(batch * len, D);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < len; ++i) {
                std::vector<double> w(len, 0.0);
                double z = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    if (!valid.empty() && !valid[b * len + j]) continue;
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += Q(b * len + i, h * dh + c) * K(b * len + j, h * dh + c);
                    w[j] = std::exp(s / std::sqrt(static_cast<double>(dh)));
                    z += w[j];
                }
                for (std::size_t j = 0; j < len; ++j) {
                    for (std::size_t c = 0; c < dh; ++c) out(b * len + i, h * dh + c) += w[j] / z * V(b * len + j, h * dh + c);
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("elementwise and linear ops: gradients") {
    std::mt19937_64 rng(1);
    auto A = random_tensor(3, 4, rng), B = random_tensor(4, 2, rng), C = random_tensor(3, 4, rng);
    auto bias = random_tensor(1, 4, rng);

    CHECK(grad_check({A, B}, [](auto& t, auto& v) { return reduce(t, matmul(t, v[0], v[1])); }).worst_rel < kTol);
    CHECK(grad_check({A, C}, [](auto& t, auto& v) { return reduce(t, add(t, v[0], v[1])); }).worst_rel < kTol);
    CHECK(grad_check({A, C}, [](auto& t, auto& v) { return reduce(t, sub(t, v[0], v[1])); }).worst_rel < kTol);
    CHECK(grad_check({A, C}, [](auto& t, auto& v) { return reduce(t, mul(t, v[0], v[1])); }).worst_rel < kTol);
    CHECK(grad_check({A, bias}, [](auto& t, auto& v) { return reduce(t, add_row(t, v[0], v[1])); }).worst_rel < kTol);
    auto W = random_tensor(4, 5, rng), b5 = random_tensor(1, 5, rng);
    CHECK(grad_check({A, W, b5}, [](auto& t, auto& v) { return reduce(t, linear(t, v[0], v[1], v[2])); }).worst_rel <
          kTol);
    CHECK(grad_check({A}, [](auto& t, auto& v) { return reduce(t, affine(t, v[0], -1.5, 0.25)); }).worst_rel < kTol);

    // Keep inputs away from the ReLU kink and positive for pow.
    auto away = A;
    for (auto& x : away.values()) x += (x >= 0 ? 0.1 : -0.1);
    CHECK(grad_check({away}, [](auto& t, auto& v) { return reduce(t, relu(t, v[0])); }).worst_rel < kTol);
    auto pos = A;
    for (auto& x : pos.values()) x = std::abs(x) + 0.5;
    CHECK(grad_check({pos}, [](auto& t, auto& v) { return reduce(t, pow_scalar(t, v[0], 2.5)); }).worst_rel < kTol);
}

TEST_CASE("reductions and losses: gradients") {
    std::mt19937_64 rng(2);
    auto A = random_tensor(4, 3, rng);
    CHECK(grad_check({A}, [](auto& t, auto& v) { return sum(t, v[0]); }).worst_rel < kTol);
    CHECK(grad_check({A}, [](auto& t, auto& v) { return mean(t, v[0]); }).worst_rel < kTol);
    CHECK(grad_check({A}, [](auto& t, auto& v) { return logsumexp(t, v[0]); }).worst_rel < kTol);
    CHECK(grad_check({A}, [](auto& t, auto& v) { return reduce(t, logsumexp_rows(t, v[0])); }).worst_rel < kTol);
    const std::vector<int> labels{0, 2, 1, 2};
    CHECK(grad_check({A}, [&](auto& t, auto& v) { return softmax_cross_entropy<double>(t, v[0], labels); }).worst_rel <
          kTol);
    auto logits = random_tensor(5, 1, rng);
    const std::vector<double> targets{1, 0, 1, 0.5, 0};
    CHECK(grad_check({logits}, [&](auto& t, auto& v) { return bce_with_logits<double>(t, v[0], targets); }).worst_rel <
          kTol);
    auto B = random_tensor(4, 3, rng);
    CHECK(grad_check({A, B}, [](auto& t, auto& v) { return reduce(t, row_cosine(t, v[0], v[1])); }).worst_rel < kTol);
}

TEST_CASE("loss values against direct formulas") {
    Tape<double> t(false);
    auto x = Tensor<double>::matrix(2, 3);
    x(0, 0) = 1, x(0, 1) = 2, x(0, 2) = 3;
    x(1, 0) = -1, x(1, 1) = 0, x(1, 2) = 1;
    Var v = t.constant(x);
    const std::vector<int> lab{2, 0};
    const double l0 = std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3;
    const double l1 = std::log(std::exp(-1) + 1 + std::exp(1)) + 1;
    CHECK(t.value(softmax_cross_entropy<double>(t, v, lab))[0] == doctest::Approx((l0 + l1) / 2).epsilon(1e-12));
    CHECK(t.value(logsumexp(t, v))[0] ==
          doctest::Approx(std::log(std::exp(1) + std::exp(2) + std::exp(3) + std::exp(-1) + 1 + std::exp(1))));

    auto z = Tensor<double>::matrix(1, 1, 0.3);
    const std::vector<double> y{1.0};
    CHECK(t.value(bce_with_logits<double>(t, t.constant(z), y))[0] ==
          doctest::Approx(-std::log(1.0 / (1.0 + std::exp(-0.3)))).epsilon(1e-12));
}

TEST_CASE("layer norm: gradients and normalized output") {
    std::mt19937_64 rng(3);
    auto X = random_tensor(3, 6, rng), g = random_tensor(1, 6, rng), b = random_tensor(1, 6, rng);
    CHECK(grad_check({X, g, b}, [](auto& t, auto& v) { return reduce(t, layer_norm(t, v[0], v[1], v[2])); })
              .worst_rel < kTol);

    Tape<double> t(false);
    auto ones = Tensor<double>::matrix(1, 6, 1.0);
    auto zeros = Tensor<double>::matrix(1, 6, 0.0);
    const auto& Y = t.value(layer_norm(t, t.constant(X), t.constant(ones), t.constant(zeros), 0.0));
    for (std::size_t r = 0; r < 3; ++r) {
        double m = 0, s = 0;
        for (double v : Y.row(r)) m += v;
        for (double v : Y.row(r)) s += v * v;
        CHECK(std::abs(m / 6) < 1e-12);
        CHECK(s / 6 == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("attention: trivial cases") {
    std::mt19937_64 rng(4);
    ForwardContext eval;
    {
        Tape<double> t(false);
        auto q = random_tensor(1, 4, rng), k = random_tensor(1, 4, rng), v = random_tensor(1, 4, rng);
        const auto& out = t.value(attention(t, t.constant(q), t.constant(k), t.constant(v), {1, 1, 2}, {}, eval));
        for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-12));
    }
    {
        Tape<double> t(false);
        auto q = random_tensor(3, 4, rng), v = random_tensor(3, 4, rng);
        auto krow = random_tensor(1, 4, rng);
        auto k = Tensor<double>::matrix(3, 4);
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 4; ++c) k(r, c) = krow[c];
        }
        const auto& out = t.value(attention(t, t.constant(q), t.constant(k), t.constant(v), {1, 3, 1}, {}, eval));
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                CHECK(out(r, c) == doctest::Approx((v(0, c) + v(1, c) + v(2, c)) / 3).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("attention: matches a dense reference, rows are distributions") {
    std::mt19937_64 rng(5);
    ForwardContext eval;
    Tape<double> t(false);
    auto q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng), v = random_tensor(3, 4, rng);
    const auto& out = t.value(attention(t, t.constant(q), t.constant(k), t.constant(v), {1, 3, 1}, {}, eval));
    auto ref = attention_reference(q, k, v, 1, 3, 1, {});
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - ref[i]) < 1e-6);

    // Two sequences, two heads, padding in each.
    const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1, 0, 0};
    auto q2 = random_tensor(8, 6, rng), k2 = random_tensor(8, 6, rng), v2 = random_tensor(8, 6, rng);
    const auto& out2 = t.value(attention(t, t.constant(q2), t.constant(k2), t.constant(v2), {2, 4, 2}, valid, eval));
    auto ref2 = attention_reference(q2, k2, v2, 2, 4, 2, valid);
    for (std::size_t i = 0; i < out2.size(); ++i) CHECK(std::abs(out2[i] - ref2[i]) < 1e-9);

    // With V = identity the output rows are the attention probabilities.
    auto eye = Tensor<double>::matrix(4, 4);
    for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
    auto q3 = random_tensor(4, 4, rng), k3 = random_tensor(4, 4, rng);
    const std::vector<std::uint8_t> valid3{1, 0, 1, 1};
    const auto& probs = t.value(attention(t, t.constant(q3), t.constant(k3), t.constant(eye), {1, 4, 1}, valid3, eval));
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0;
        for (double p : probs.row(r)) s += p;
        CHECK(std::abs(s - 1.0) <= 1e-6);
        CHECK(probs(r, 1) == 0.0);
    }
}

TEST_CASE("attention: gradients with padding and heads") {
    std::mt19937_64 rng(6);
    auto q = random_tensor(6, 4, rng), k = random_tensor(6, 4, rng), v = random_tensor(6, 4, rng);
    const std::vector<std::uint8_t> valid{1, 1, 1, 1, 0, 1};
    auto res = grad_check({q, k, v}, [&](auto& t, auto& vars) {
        return reduce(t, attention(t, vars[0], vars[1], vars[2], {2, 3, 2}, valid, ForwardContext{}));
    });
    CHECK(res.worst_rel < kTol);
    CHECK(res.checked == 72);
}

TEST_CASE("dropout: scaling, inference pass-through, gradient") {
    std::mt19937_64 rng(7);
    auto A = random_tensor(20, 10, rng);
    {
        Tape<double> t(false);
        Var a = t.constant(A);
        CHECK(dropout(t, a, ForwardContext{}).id == a.id);
        ForwardContext no_rng{true, 0.5, nullptr};
        CHECK(dropout(t, a, no_rng).id == a.id);
    }
    {
        Rng r(3);
        ForwardContext train{true, 0.25, &r};
        Tape<double> t(false);
        const auto& out = t.value(dropout(t, t.constant(A), train));
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < A.size(); ++i) {
            if (out[i] == 0.0) {
                ++zeros;
            } else {
                CHECK(out[i] == doctest::Approx(A[i] / 0.75).epsilon(1e-12));
            }
        }
        CHECK(zeros > 20);
        CHECK(zeros < 80);
    }
    auto res = grad_check({A}, [](auto& t, auto& v) {
        Rng r(11);
        ForwardContext train{true, 0.3, &r};
        return reduce(t, dropout(t, v[0], train));
    });
    CHECK(res.worst_rel < kTol);
}

TEST_CASE("gather and concat: values and gradients") {
    std::mt19937_64 rng(8);
    auto A = random_tensor(4, 3, rng), B = random_tensor(2, 3, rng), C = random_tensor(4, 2, rng);
    const std::vector<std::uint32_t> idx{3, 0, 3, 1};
    CHECK(grad_check({A}, [&](auto& t, auto& v) { return reduce(t, gather_rows<double>(t, v[0], idx)); }).worst_rel <
          kTol);
    CHECK(grad_check({A, B}, [](auto& t, auto& v) { return reduce(t, concat_rows<double>(t, {v[0], v[1]})); })
              .worst_rel < kTol);
    CHECK(grad_check({A, C}, [](auto& t, auto& v) { return reduce(t, concat_cols<double>(t, {v[0], v[1]})); })
              .worst_rel < kTol);

    Tape<double> t;
    Var a = t.input(A);
    Var g = gather_rows<double>(t, a, idx);
    CHECK(t.value(g)(0, 1) == A(3, 1));
    t.backward(sum(t, g));
    CHECK(t.grad(a)(3, 0) == 2.0);
    CHECK(t.grad(a)(2, 0) == 0.0);
}

TEST_CASE("row_cosine names the zero-norm row") {
    Tape<double> t(false);
    auto a = Tensor<double>::matrix(2, 2, 1.0);
    auto b = Tensor<double>::matrix(2, 2, 1.0);
    b(1, 0) = 0;
    b(1, 1) = 0;
    try {
        row_cosine(t, t.constant(a), t.constant(b));
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("shape mismatches throw") {
    Tape<double> t(false);
    Var a = t.constant(Tensor<double>::matrix(2, 3));
    Var b = t.constant(Tensor<double>::matrix(2, 3));
    CHECK_THROWS_AS(matmul(t, a, b), std::invalid_argument);
    CHECK_THROWS_AS(add(t, a, t.constant(Tensor<double>::matrix(3, 2))), std::invalid_argument);
    CHECK_THROWS_AS(attention(t, a, b, b, {1, 2, 2}, {}, ForwardContext{}), std::invalid_argument);
}

TEST_CASE("tape: parameter grads, accumulation, misuse") {
    Parameter<double> w("w", Tensor<double>::matrix(1, 3));
    w.value[0] = 1, w.value[1] = 2, w.value[2] = 3;
    auto x = Tensor<double>::matrix(3, 2);
    x(0, 0) = 1, x(1, 0) = 2, x(2, 0) = 3, x(0, 1) = -1, x(1, 1) = 0, x(2, 1) = 4;

    // loss = sum(w x); d/dw_i = sum_j x_ij.
    for (int pass = 1; pass <= 2; ++pass) {
        Tape<double> t;
        t.backward(sum(t, matmul(t, t.param(w), t.constant(x))));
        CHECK(w.grad[0] == 0.0);
        CHECK(w.grad[1] == pass * 2.0);
        CHECK(w.grad[2] == pass * 7.0);
    }
    w.zero_grad();
    CHECK(w.grad[2] == 0.0);

    Tape<double> frozen;
    Var y = sum(frozen, matmul(frozen, frozen.frozen(w), frozen.constant(x)));
    frozen.backward(y);
    CHECK(w.grad[2] == 0.0);

    Tape<double> empty;
    CHECK_THROWS_AS(empty.backward(Var{}), std::logic_error);
    Tape<double> t;
    Var m = t.input(Tensor<double>::matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(m), std::logic_error);
}
