#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mgt/nn/transformer.hpp"

namespace mgt::nn {

struct ModelConfig {
    std::size_t in_dim = 0;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t decoder_layers = 2;
    // 0 selects default_heads(hidden).
    std::size_t heads = 0;

    std::size_t resolved_heads() const noexcept { return heads == 0 ? default_heads(hidden) : heads; }
    void validate() const;
};

// Input projection, encoder f_E, feature decoder f_D1 (transformer stack plus
// an output projection back to the feature width), structure decoder f_D2
// (two-layer MLP) and the shared mask token.
template <typename T>
struct ModelParams {
    ModelConfig config;
    Parameter<T> w_in, b_in;
    std::vector<TransformerLayerParams<T>> encoder;
    // False for checkpoints that only carry the encoder (e.g. after fine-tuning).
    bool has_decoders = true;
    std::vector<TransformerLayerParams<T>> decoder;
    Parameter<T> w_out, b_out;
    Parameter<T> s_w1, s_b1, s_w2, s_b2;
    Parameter<T> mask_token;

    static ModelParams init(const ModelConfig& cfg, Rng& rng);

    // hidden == in_dim, identity projections, all transformer weights zero:
    // f_D1(f_E(Linear(x))) == x exactly when positional encodings are zero.
    static ModelParams constructed_identity(std::size_t dim, std::size_t layers, std::size_t decoder_layers);

    std::vector<Parameter<T>*> parameters();
    std::vector<const Parameter<T>*> parameters() const;
    std::vector<Parameter<T>*> encoder_parameters();
    void zero_grad();
    // Drops f_D1, f_D2 and the mask token.
    void strip_decoders();

    template <typename U>
    ModelParams<U> cast() const;
};

// Linear(x) = x W_in + b_in.
template <typename T>
Var project(Tape<T>& t, ModelParams<T>& m, Var tokens);

// Output of the transformer stack of f_D1 followed by the projection to in_dim.
template <typename T>
Var feature_decode(Tape<T>& t, ModelParams<T>& m, Var h, const AttentionShape& shape,
                   std::span<const std::uint8_t> key_valid, const ForwardContext& ctx);

template <typename T>
Var structure_decode(Tape<T>& t, ModelParams<T>& m, Var h);

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    auto c = [](const Parameter<T>& p) { return Parameter<U>(p.name, p.value.template cast<U>()); };
    ModelParams<U> out;
    out.config = config;
    out.w_in = c(w_in);
    out.b_in = c(b_in);
    for (const auto& l : encoder) out.encoder.push_back(l.template cast<U>());
    out.has_decoders = has_decoders;
    for (const auto& l : decoder) out.decoder.push_back(l.template cast<U>());
    out.w_out = c(w_out);
    out.b_out = c(b_out);
    out.s_w1 = c(s_w1);
    out.s_b1 = c(s_b1);
    out.s_w2 = c(s_w2);
    out.s_b2 = c(s_b2);
    out.mask_token = c(mask_token);
    return out;
}

}  // namespace mgt::nn
