#include "mgt/nn/transformer.hpp"

#include <random>
#include <stdexcept>

namespace mgt::nn {

std::size_t default_heads(std::size_t hidden) noexcept {
    return hidden >= 64 ? hidden / 64 : 1;
}

namespace {

template <typename T>
Parameter<T> normal_matrix(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 0.02);
    auto m = Tensor<T>::matrix(rows, cols);
    for (auto& v : m.values()) v = static_cast<T>(dist(rng));
    return Parameter<T>(name, std::move(m));
}

template <typename T>
Parameter<T> filled(const std::string& name, std::vector<std::size_t> shape, T value) {
    return Parameter<T>(name, Tensor<T>(std::move(shape), value));
}

}  // namespace

template <typename T>
TransformerLayerParams<T> TransformerLayerParams<T>::init(const std::string& prefix, std::size_t hidden,
                                                          std::size_t heads, Rng& rng) {
    if (heads == 0 || hidden % heads != 0) {
        throw InputError("head count " + std::to_string(heads) + " does not divide hidden size " +
                         std::to_string(hidden));
    }
    const std::size_t inner = 4 * hidden;
    TransformerLayerParams p;
    p.heads = heads;
    p.ln1_gamma = filled<T>(prefix + ".ln1.gamma", {hidden}, T(1));
    p.ln1_beta = filled<T>(prefix + ".ln1.beta", {hidden}, T(0));
    p.w_q = normal_matrix<T>(prefix + ".attn.w_q", hidden, hidden, rng);
    p.w_k = normal_matrix<T>(prefix + ".attn.w_k", hidden, hidden, rng);
    p.w_v = normal_matrix<T>(prefix + ".attn.w_v", hidden, hidden, rng);
    p.w_o = normal_matrix<T>(prefix + ".attn.w_o", hidden, hidden, rng);
    p.ln2_gamma = filled<T>(prefix + ".ln2.gamma", {hidden}, T(1));
    p.ln2_beta = filled<T>(prefix + ".ln2.beta", {hidden}, T(0));
    p.w_1 = normal_matrix<T>(prefix + ".ffn.w_1", hidden, inner, rng);
    p.b_1 = filled<T>(prefix + ".ffn.b_1", {inner}, T(0));
    p.w_2 = normal_matrix<T>(prefix + ".ffn.w_2", inner, hidden, rng);
    p.b_2 = filled<T>(prefix + ".ffn.b_2", {hidden}, T(0));
    return p;
}

template <typename T>
TransformerLayerParams<T> TransformerLayerParams<T>::zeros(const std::string& prefix, std::size_t hidden,
                                                           std::size_t heads) {
    Rng unused(0);
    TransformerLayerParams p = init(prefix, hidden, heads, unused);
    for (Parameter<T>* q : p.parameters()) {
        if (q != &p.ln1_gamma && q != &p.ln2_gamma) q->value.fill(T(0));
    }
    return p;
}

template <typename T>
std::vector<Parameter<T>*> TransformerLayerParams<T>::parameters() {
    return {&ln1_gamma, &ln1_beta, &w_q, &w_k, &w_v, &w_o, &ln2_gamma, &ln2_beta, &w_1, &b_1, &w_2, &b_2};
}

template <typename T>
std::vector<const Parameter<T>*> TransformerLayerParams<T>::parameters() const {
    return {&ln1_gamma, &ln1_beta, &w_q, &w_k, &w_v, &w_o, &ln2_gamma, &ln2_beta, &w_1, &b_1, &w_2, &b_2};
}

template <typename T>
Var ffn(Tape<T>& t, Var h, TransformerLayerParams<T>& p) {
    Var inner = relu(t, linear(t, h, t.param(p.w_1), t.param(p.b_1)));
    return linear(t, inner, t.param(p.w_2), t.param(p.b_2));
}

template <typename T>
Var transformer_layer(Tape<T>& t, Var h, TransformerLayerParams<T>& p, const AttentionShape& shape,
                      std::span<const std::uint8_t> key_valid, const ForwardContext& ctx) {
    if (t.value(h).cols() != p.hidden()) {
        throw std::invalid_argument("transformer_layer: input width " + std::to_string(t.value(h).cols()) +
                                    " != hidden " + std::to_string(p.hidden()));
    }
    AttentionShape s = shape;
    s.heads = p.heads;
    Var n1 = layer_norm(t, h, t.param(p.ln1_gamma), t.param(p.ln1_beta));
    Var q = matmul(t, n1, t.param(p.w_q));
    Var k = matmul(t, n1, t.param(p.w_k));
    Var v = matmul(t, n1, t.param(p.w_v));
    Var attn = matmul(t, attention(t, q, k, v, s, key_valid, ctx), t.param(p.w_o));
    Var x = add(t, h, attn);
    Var n2 = layer_norm(t, x, t.param(p.ln2_gamma), t.param(p.ln2_beta));
    return add(t, x, dropout(t, ffn(t, n2, p), ctx));
}

template <typename T>
Var encoder_forward(Tape<T>& t, Var h, std::vector<TransformerLayerParams<T>>& layers, const AttentionShape& shape,
                    std::span<const std::uint8_t> key_valid, const ForwardContext& ctx) {
    for (auto& layer : layers) h = transformer_layer(t, h, layer, shape, key_valid, ctx);
    return h;
}

#define MGT_INSTANTIATE_TRANSFORMER(T)                                                                        \
    template struct TransformerLayerParams<T>;                                                               \
    template Var ffn<T>(Tape<T>&, Var, TransformerLayerParams<T>&);                                          \
    template Var transformer_layer<T>(Tape<T>&, Var, TransformerLayerParams<T>&, const AttentionShape&,      \
                                      std::span<const std::uint8_t>, const ForwardContext&);                 \
    template Var encoder_forward<T>(Tape<T>&, Var, std::vector<TransformerLayerParams<T>>&,                  \
                                    const AttentionShape&, std::span<const std::uint8_t>, const ForwardContext&);

MGT_INSTANTIATE_TRANSFORMER(float)
MGT_INSTANTIATE_TRANSFORMER(double)

}  // namespace mgt::nn
