#pragma once

// Differentiable operations recorded on a Tape. All tensors are treated as
// matrices (rank-1 tensors are single rows). Shape mismatches throw
// std::invalid_argument.

#include <cstdint>
#include <span>
#include <vector>

#include "mgt/common.hpp"
#include "mgt/nn/tape.hpp"

namespace mgt::nn {

// Dropout is only active when `train` is set and `rng` is non-null.
struct ForwardContext {
    bool train = false;
    double dropout = 0.0;
    Rng* rng = nullptr;

    bool dropout_active() const noexcept { return train && dropout > 0.0 && rng != nullptr; }
};

// Q, K, V hold `batch` sequences of `seq_len` rows each, stacked row-wise.
struct AttentionShape {
    std::size_t batch = 1;
    std::size_t seq_len = 0;
    std::size_t heads = 1;
};

template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var sub(Tape<T>& t, Var a, Var b);
// a (n x m) + bias (1 x m) broadcast over rows.
template <typename T> Var add_row(Tape<T>& t, Var a, Var bias);
template <typename T> Var linear(Tape<T>& t, Var x, Var weight, Var bias);
template <typename T> Var mul(Tape<T>& t, Var a, Var b);
// scale * a + shift, elementwise.
template <typename T> Var affine(Tape<T>& t, Var a, T scale, T shift);
template <typename T> Var relu(Tape<T>& t, Var a);
template <typename T> Var pow_scalar(Tape<T>& t, Var a, T exponent);
template <typename T> Var dropout(Tape<T>& t, Var a, const ForwardContext& ctx);

// Row-wise layer normalization with affine gamma/beta (1 x m each).
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5));

// Multi-head scaled dot-product attention, softmax(QK^T / sqrt(d_head)) V,
// per sequence and head. Keys with key_valid[row] == 0 get -inf logits.
// Dropout (if active) is applied to the attention probabilities.
template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, const AttentionShape& shape, std::span<const std::uint8_t> key_valid,
              const ForwardContext& ctx);

template <typename T> Var gather_rows(Tape<T>& t, Var a, std::span<const std::uint32_t> index);
template <typename T> Var concat_rows(Tape<T>& t, const std::vector<Var>& parts);
template <typename T> Var concat_cols(Tape<T>& t, const std::vector<Var>& parts);

// n x 1 cosine similarity of matching rows. Throws InputError naming the row
// when either row has zero norm.
template <typename T> Var row_cosine(Tape<T>& t, Var a, Var b);

template <typename T> Var sum(Tape<T>& t, Var a);
template <typename T> Var mean(Tape<T>& t, Var a);
// sum_i a_i * w_i over all elements, w constant.
template <typename T> Var weighted_sum(Tape<T>& t, Var a, std::span<const T> weights);
// log(sum(exp(a))) over all elements.
template <typename T> Var logsumexp(Tape<T>& t, Var a);
// n x 1 row-wise log-sum-exp.
template <typename T> Var logsumexp_rows(Tape<T>& t, Var a);

// Mean over rows of -log softmax(logits)[label].
template <typename T> Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const int> labels);
// Mean binary cross-entropy of n x 1 logits against targets in [0, 1].
template <typename T> Var bce_with_logits(Tape<T>& t, Var logits, std::span<const T> targets);

}  // namespace mgt::nn
