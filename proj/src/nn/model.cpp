#include "mgt/nn/model.hpp"

#include <random>

namespace mgt::nn {

void ModelConfig::validate() const {
    if (in_dim == 0) throw InputError("feature dimension must be positive");
    if (hidden == 0) throw InputError("hidden_size must be positive");
    const std::size_t h = resolved_heads();
    if (hidden % h != 0) {
        throw InputError("head count " + std::to_string(h) + " does not divide hidden_size " + std::to_string(hidden));
    }
}

namespace {

template <typename T>
Parameter<T> normal(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 0.02);
    auto m = Tensor<T>::matrix(rows, cols);
    for (auto& v : m.values()) v = static_cast<T>(dist(rng));
    return Parameter<T>(name, std::move(m));
}

template <typename T>
Parameter<T> zero_vec(const std::string& name, std::size_t n) {
    return Parameter<T>(name, Tensor<T>::vector(n));
}

template <typename T>
Parameter<T> identity(const std::string& name, std::size_t n) {
    auto m = Tensor<T>::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return Parameter<T>(name, std::move(m));
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.in_dim, h = cfg.hidden, heads = cfg.resolved_heads();
    ModelParams m;
    m.config = cfg;
    m.w_in = normal<T>("input.weight", d, h, rng);
    m.b_in = zero_vec<T>("input.bias", h);
    for (std::size_t i = 0; i < cfg.layers; ++i) {
        m.encoder.push_back(TransformerLayerParams<T>::init("encoder." + std::to_string(i), h, heads, rng));
    }
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
        m.decoder.push_back(TransformerLayerParams<T>::init("feat_decoder." + std::to_string(i), h, heads, rng));
    }
    m.w_out = normal<T>("feat_decoder.out.weight", h, d, rng);
    m.b_out = zero_vec<T>("feat_decoder.out.bias", d);
    m.s_w1 = normal<T>("struct_decoder.fc1.weight", h, h, rng);
    m.s_b1 = zero_vec<T>("struct_decoder.fc1.bias", h);
    m.s_w2 = normal<T>("struct_decoder.fc2.weight", h, h, rng);
    m.s_b2 = zero_vec<T>("struct_decoder.fc2.bias", h);
    m.mask_token = normal<T>("mask_token", 1, h, rng);
    return m;
}

template <typename T>
ModelParams<T> ModelParams<T>::constructed_identity(std::size_t dim, std::size_t layers, std::size_t decoder_layers) {
    ModelConfig cfg;
    cfg.in_dim = dim;
    cfg.hidden = dim;
    cfg.layers = layers;
    cfg.decoder_layers = decoder_layers;
    cfg.heads = 1;
    Rng rng(0);
    ModelParams m = init(cfg, rng);
    m.w_in = identity<T>("input.weight", dim);
    for (std::size_t i = 0; i < layers; ++i) {
        m.encoder[i] = TransformerLayerParams<T>::zeros("encoder." + std::to_string(i), dim, 1);
    }
    for (std::size_t i = 0; i < decoder_layers; ++i) {
        m.decoder[i] = TransformerLayerParams<T>::zeros("feat_decoder." + std::to_string(i), dim, 1);
    }
    m.w_out = identity<T>("feat_decoder.out.weight", dim);
    return m;
}

template <typename T>
std::vector<Parameter<T>*> ModelParams<T>::encoder_parameters() {
    std::vector<Parameter<T>*> out{&w_in, &b_in};
    for (auto& l : encoder) {
        for (auto* p : l.parameters()) out.push_back(p);
    }
    return out;
}

template <typename T>
std::vector<Parameter<T>*> ModelParams<T>::parameters() {
    std::vector<Parameter<T>*> out = encoder_parameters();
    if (!has_decoders) return out;
    for (auto& l : decoder) {
        for (auto* p : l.parameters()) out.push_back(p);
    }
    for (auto* p : {&w_out, &b_out, &s_w1, &s_b1, &s_w2, &s_b2, &mask_token}) out.push_back(p);
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> ModelParams<T>::parameters() const {
    auto mut = const_cast<ModelParams*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

template <typename T>
void ModelParams<T>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
void ModelParams<T>::strip_decoders() {
    has_decoders = false;
    config.decoder_layers = 0;
    decoder.clear();
    w_out = b_out = s_w1 = s_b1 = s_w2 = s_b2 = mask_token = Parameter<T>();
}

template <typename T>
Var project(Tape<T>& t, ModelParams<T>& m, Var tokens) {
    return linear(t, tokens, t.param(m.w_in), t.param(m.b_in));
}

template <typename T>
Var feature_decode(Tape<T>& t, ModelParams<T>& m, Var h, const AttentionShape& shape,
                   std::span<const std::uint8_t> key_valid, const ForwardContext& ctx) {
    if (!m.has_decoders) throw InputError("checkpoint has no feature decoder");
    Var z = encoder_forward(t, h, m.decoder, shape, key_valid, ctx);
    return linear(t, z, t.param(m.w_out), t.param(m.b_out));
}

template <typename T>
Var structure_decode(Tape<T>& t, ModelParams<T>& m, Var h) {
    if (!m.has_decoders) throw InputError("checkpoint has no structure decoder");
    Var a = relu(t, linear(t, h, t.param(m.s_w1), t.param(m.s_b1)));
    return linear(t, a, t.param(m.s_w2), t.param(m.s_b2));
}

#define MGT_INSTANTIATE_MODEL(T)                                                                         \
    template struct ModelParams<T>;                                                                     \
    template Var project<T>(Tape<T>&, ModelParams<T>&, Var);                                            \
    template Var feature_decode<T>(Tape<T>&, ModelParams<T>&, Var, const AttentionShape&,               \
                                   std::span<const std::uint8_t>, const ForwardContext&);               \
    template Var structure_decode<T>(Tape<T>&, ModelParams<T>&, Var);

MGT_INSTANTIATE_MODEL(float)
MGT_INSTANTIATE_MODEL(double)

}  // namespace mgt::nn
