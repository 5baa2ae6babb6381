#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mgt/nn/ops.hpp"

namespace mgt::nn {

// Default head count: hidden / 64, at least 1.
std::size_t default_heads(std::size_t hidden) noexcept;

template <typename T>
struct TransformerLayerParams {
    std::size_t heads = 1;
    Parameter<T> ln1_gamma, ln1_beta;
    Parameter<T> w_q, w_k, w_v, w_o;
    Parameter<T> ln2_gamma, ln2_beta;
    Parameter<T> w_1, b_1, w_2, b_2;

    // Weights ~ N(0, 0.02), biases 0, layer norm scale 1 / shift 0.
    static TransformerLayerParams init(const std::string& prefix, std::size_t hidden, std::size_t heads, Rng& rng);
    // Every tensor zero except the layer-norm scales; the layer is then the identity map.
    static TransformerLayerParams zeros(const std::string& prefix, std::size_t hidden, std::size_t heads);

    std::size_t hidden() const noexcept { return w_q.value.rows(); }
    std::vector<Parameter<T>*> parameters();
    std::vector<const Parameter<T>*> parameters() const;

    template <typename U>
    TransformerLayerParams<U> cast() const;
};

// ReLU(H W_1 + b_1) W_2 + b_2
template <typename T>
Var ffn(Tape<T>& t, Var h, TransformerLayerParams<T>& p);

// X = H + Attn(LN(H)); out = X + Dropout(FFN(LN(X))).
// `key_valid` marks non-padding rows (empty = all valid).
template <typename T>
Var transformer_layer(Tape<T>& t, Var h, TransformerLayerParams<T>& p, const AttentionShape& shape,
                      std::span<const std::uint8_t> key_valid, const ForwardContext& ctx);

template <typename T>
Var encoder_forward(Tape<T>& t, Var h, std::vector<TransformerLayerParams<T>>& layers, const AttentionShape& shape,
                    std::span<const std::uint8_t> key_valid, const ForwardContext& ctx);

template <typename T>
template <typename U>
TransformerLayerParams<U> TransformerLayerParams<T>::cast() const {
    auto c = [](const Parameter<T>& p) { return Parameter<U>(p.name, p.value.template cast<U>()); };
    TransformerLayerParams<U> out;
    out.heads = heads;
    out.ln1_gamma = c(ln1_gamma);
    out.ln1_beta = c(ln1_beta);
    out.w_q = c(w_q);
    out.w_k = c(w_k);
    out.w_v = c(w_v);
    out.w_o = c(w_o);
    out.ln2_gamma = c(ln2_gamma);
    out.ln2_beta = c(ln2_beta);
    out.w_1 = c(w_1);
    out.b_1 = c(b_1);
    out.w_2 = c(w_2);
    out.b_2 = c(b_2);
    return out;
}

}  // namespace mgt::nn
