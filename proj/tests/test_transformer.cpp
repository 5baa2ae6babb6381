#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "json.hpp"
#include "mgt/nn/adamw.hpp"
#include "mgt/nn/checkpoint.hpp"
#include "mgt/nn/model.hpp"
#include "mgt/nn/transformer.hpp"
#include "test_util.hpp"

using namespace mgt;
using namespace mgt::nn;
using mgt::test::param_grad_check;
using mgt::test::random_tensor;
using mgt::test::reduce;

namespace {

// Gives every parameter random values of a visible scale so that gradient
// checks exercise more than the near-zero init regime.
template <typename P>
void randomize(P& params, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    for (auto* p : params.parameters()) {
        for (auto& v : p->value.values()) v += nd(rng);
    }
}

TransformerLayerParams<double> layer(std::size_t hidden, std::size_t heads, std::uint64_t seed) {
    Rng rng(seed);
    auto p = TransformerLayerParams<double>::init("l", hidden, heads, rng);
    randomize(p, seed + 1);
    return p;
}

Tensor<double> run_layer(TransformerLayerParams<double>& p, const Tensor<double>& x, const AttentionShape& s) {
    Tape<double> t(false);
    return t.value(transformer_layer(t, t.constant(x), p, s, {}, ForwardContext{}));
}

}  // namespace

TEST_CASE("default heads and parameter names") {
    CHECK(default_heads(16) == 1);
    CHECK(default_heads(64) == 1);
    CHECK(default_heads(1024) == 16);
    Rng rng(0);
    ModelConfig cfg{8, 16, 2, 1, 0};
    auto m = ModelParams<float>::init(cfg, rng);
    std::vector<std::string> names;
    for (auto* p : m.parameters()) names.push_back(p->name);
    CHECK(names.front() == "input.weight");
    CHECK(std::find(names.begin(), names.end(), "encoder.1.attn.w_q") != names.end());
    CHECK(std::find(names.begin(), names.end(), "feat_decoder.0.ffn.w_1") != names.end());
    CHECK(std::find(names.begin(), names.end(), "struct_decoder.fc2.bias") != names.end());
    CHECK(names.back() == "mask_token");
    CHECK(m.encoder[0].w_1.value.cols() == 64);
    CHECK(m.w_out.value.cols() == 8);
    CHECK_THROWS_AS(ModelParams<float>::init(ModelConfig{8, 16, 1, 1, 3}, rng), InputError);
}

TEST_CASE("init statistics") {
    Rng rng(1);
    auto p = TransformerLayerParams<double>::init("l", 64, 1, rng);
    double s = 0, ss = 0;
    for (double v : p.w_1.value.values()) {
        s += v;
        ss += v * v;
    }
    const double n = static_cast<double>(p.w_1.value.size());
    CHECK(std::abs(s / n) < 0.002);
    CHECK(std::sqrt(ss / n) == doctest::Approx(0.02).epsilon(0.05));
    for (double v : p.b_1.value.values()) CHECK(v == 0.0);
    for (double v : p.ln1_gamma.value.values()) CHECK(v == 1.0);
    for (double v : p.ln2_beta.value.values()) CHECK(v == 0.0);
}

TEST_CASE("ffn examples") {
    std::mt19937_64 rng(2);
    auto p = TransformerLayerParams<double>::zeros("l", 3, 1);
    for (std::size_t i = 0; i < 3; ++i) p.b_2.value[i] = 0.5 * static_cast<double>(i + 1);
    auto x = random_tensor(4, 3, rng);
    {
        Tape<double> t(false);
        const auto& y = t.value(ffn(t, t.constant(x), p));
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 3; ++c) CHECK(y(r, c) == 0.5 * static_cast<double>(c + 1));
        }
    }
    {
        // 1x1 identity-like weights, hidden 1 and inner 4: W_1 = [1,0,0,0], W_2 = [1,0,0,0]^T.
        auto q = TransformerLayerParams<double>::zeros("l", 1, 1);
        q.w_1.value[0] = 1.0;
        q.w_2.value[0] = 1.0;
        Tape<double> t(false);
        auto in = Tensor<double>::matrix(1, 1, 2.75);
        CHECK(t.value(ffn(t, t.constant(in), q))[0] == 2.75);
    }
    {
        auto q = layer(4, 1, 3);
        auto in = random_tensor(3, 4, rng);
        Tape<double> t(false);
        const auto& y = t.value(ffn(t, t.constant(in), q));
        for (std::size_t r = 0; r < 3; ++r) {
            std::vector<double> inner(16, 0.0);
            for (std::size_t j = 0; j < 16; ++j) {
                double s = q.b_1.value[j];
                for (std::size_t c = 0; c < 4; ++c) s += in(r, c) * q.w_1.value(c, j);
                inner[j] = std::max(0.0, s);
            }
            for (std::size_t c = 0; c < 4; ++c) {
                double s = q.b_2.value[c];
                for (std::size_t j = 0; j < 16; ++j) s += inner[j] * q.w_2.value(j, c);
                CHECK(std::abs(y(r, c) - s) < 1e-6);
            }
        }
    }
}

TEST_CASE("transformer layer: zero weights trace, determinism, dropout only in training") {
    std::mt19937_64 rng(4);
    auto z = TransformerLayerParams<double>::zeros("l", 4, 2);
    for (std::size_t i = 0; i < 4; ++i) z.b_2.value[i] = static_cast<double>(i) - 1.5;
    auto x = random_tensor(3, 4, rng);
    auto y = run_layer(z, x, {1, 3, 2});
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 4; ++c) CHECK(y(r, c) == x(r, c) + z.b_2.value[c]);
    }

    auto p = layer(8, 2, 5);
    auto x8 = random_tensor(6, 8, rng);
    auto a = run_layer(p, x8, {2, 3, 2});
    auto b = run_layer(p, x8, {2, 3, 2});
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

    Rng drop(1);
    ForwardContext train{true, 0.5, &drop};
    Tape<double> t(false);
    const auto& c = t.value(transformer_layer(t, t.constant(x8), p, {2, 3, 2}, {}, train));
    CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(double)) != 0);
}

TEST_CASE("transformer layer: parameter and input gradients") {
    auto p = layer(8, 2, 6);
    std::mt19937_64 rng(7);
    auto x = random_tensor(6, 8, rng);
    const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1};
    auto params = p.parameters();
    auto res = param_grad_check(params, [&](Tape<double>& t) {
        return reduce(t, transformer_layer(t, t.constant(x), p, {2, 3, 2}, valid, ForwardContext{}));
    }, 0, 0);
    CHECK(res.checked > 500);
    CHECK(res.worst_rel < 1e-4);

    auto input = mgt::test::grad_check({x}, [&](auto& t, auto& v) {
        return reduce(t, transformer_layer(t, v[0], p, {2, 3, 2}, valid, ForwardContext{}));
    });
    CHECK(input.worst_rel < 1e-4);
}

TEST_CASE("encoder_forward composition") {
    std::mt19937_64 rng(8);
    auto x = random_tensor(4, 8, rng);
    std::vector<TransformerLayerParams<double>> none;
    std::vector<TransformerLayerParams<double>> one{layer(8, 1, 9)};
    std::vector<TransformerLayerParams<double>> two{layer(8, 1, 9), layer(8, 1, 10)};
    const AttentionShape s{1, 4, 1};
    Tape<double> t(false);
    Var in = t.constant(x);
    CHECK(encoder_forward(t, in, none, s, {}, ForwardContext{}).id == in.id);

    const auto& e1 = t.value(encoder_forward(t, in, one, s, {}, ForwardContext{}));
    const auto& l1 = t.value(transformer_layer(t, in, one[0], s, {}, ForwardContext{}));
    CHECK(std::memcmp(e1.data(), l1.data(), e1.size() * sizeof(double)) == 0);

    const auto& e2 = t.value(encoder_forward(t, in, two, s, {}, ForwardContext{}));
    Var m1 = transformer_layer(t, in, two[0], s, {}, ForwardContext{});
    const auto& m2 = t.value(transformer_layer(t, m1, two[1], s, {}, ForwardContext{}));
    CHECK(std::memcmp(e2.data(), m2.data(), e2.size() * sizeof(double)) == 0);
}

TEST_CASE("float and double forward agree") {
    Rng rng(11);
    auto md = ModelParams<double>::init(ModelConfig{6, 16, 2, 1, 2}, rng);
    randomize(md, 12);
    auto mf = md.cast<float>();
    std::mt19937_64 r(13);
    auto x = random_tensor(5, 6, r);
    const AttentionShape s{1, 5, 2};

    Tape<double> td(false);
    const auto& yd = td.value(encoder_forward(td, project(td, md, td.constant(x)), md.encoder, s, {}, ForwardContext{}));
    Tape<float> tf(false);
    const auto& yf =
        tf.value(encoder_forward(tf, project(tf, mf, tf.constant(x.cast<float>())), mf.encoder, s, {}, ForwardContext{}));
    for (std::size_t i = 0; i < yd.size(); ++i) {
        CHECK(std::abs(yd[i] - static_cast<double>(yf[i])) <= 1e-3 * std::max(1.0, std::abs(yd[i])));
    }
}

TEST_CASE("constructed identity model reproduces its input") {
    auto m = ModelParams<float>::constructed_identity(5, 2, 2);
    std::mt19937_64 r(14);
    auto x = random_tensor(3, 5, r).cast<float>();
    Tape<float> t(false);
    const AttentionShape s{1, 3, 1};
    Var h = encoder_forward(t, project(t, m, t.constant(x)), m.encoder, s, {}, ForwardContext{});
    const auto& z = t.value(feature_decode(t, m, h, s, {}, ForwardContext{}));
    CHECK(std::memcmp(z.data(), x.data(), x.size() * sizeof(float)) == 0);
}

TEST_CASE("AdamW closed forms") {
    auto make = [](double v) {
        Parameter<double> p("p", Tensor<double>::matrix(1, 3, v));
        return p;
    };
    {
        auto p = make(0.7);
        AdamW<double> opt(AdamWConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
        opt.step({&p});
        for (double v : p.value.values()) CHECK(v == 0.7);
    }
    {
        auto p = make(0.7);
        AdamW<double> opt(AdamWConfig{1e-3, 0.9, 0.999, 1e-8, 0.01});
        opt.step({&p});
        for (double v : p.value.values()) CHECK(v == doctest::Approx(0.7 * (1 - 1e-3 * 0.01)).epsilon(1e-15));
    }
    {
        auto p = make(0.5);
        p.grad[0] = 0.3;
        p.grad[1] = -2.0;
        p.grad[2] = 1e-3;
        const double lr = 3e-4;
        AdamW<double> opt(AdamWConfig{lr, 0.9, 0.999, 1e-8, 0.0});
        opt.step({&p});
        for (std::size_t i = 0; i < 3; ++i) {
            const double g = i == 0 ? 0.3 : (i == 1 ? -2.0 : 1e-3);
            CHECK(std::abs(p.value[i] - (0.5 - lr * g / (std::abs(g) + 1e-8))) < 1e-6);
        }
        CHECK(opt.steps() == 1);
    }
    {
        // Two steps with grad g: m_hat = g, v_hat = g^2 both times.
        auto p = make(1.0);
        AdamW<double> opt(AdamWConfig{0.1, 0.9, 0.999, 0.0, 0.5});
        for (int s = 0; s < 2; ++s) {
            p.grad.fill(2.0);
            opt.step({&p});
        }
        double expect = 1.0;
        for (int s = 0; s < 2; ++s) expect = expect * (1 - 0.1 * 0.5) - 0.1;
        CHECK(p.value[0] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint round trip, stripped decoders, extras, errors") {
    test::TempDir dir("ckpt");
    Rng rng(15);
    ModelConfig cfg{6, 16, 2, 1, 0};
    Checkpoint c;
    c.config_json = with_model_layout(R"({"lr":0.001})", cfg);
    c.model = ModelParams<float>::init(cfg, rng);
    c.extra.emplace_back("head.weight", Tensor<float>::matrix(16, 3, 0.25f));
    save_checkpoint(c, dir / "m.mgtc");

    const std::string bytes = test::read_text(dir / "m.mgtc");
    CHECK(bytes.substr(0, 4) == "MGTC");
    auto back = load_checkpoint(dir / "m.mgtc");
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(back.model.has_decoders);
    REQUIRE(back.extra.size() == 1);
    CHECK(back.extra[0].name == "head.weight");
    CHECK(nlohmann::json::parse(back.config_json)["lr"] == 0.001);
    CHECK(model_layout(back.config_json).hidden == 16);

    Checkpoint stripped = c;
    stripped.model.strip_decoders();
    auto s = deserialize_checkpoint(serialize_checkpoint(stripped));
    CHECK_FALSE(s.model.has_decoders);
    CHECK(s.model.parameters().size() == c.model.encoder_parameters().size());

    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)), InputError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad), InputError);
    Checkpoint wrong = c;
    wrong.config_json = with_model_layout("{}", ModelConfig{6, 32, 2, 1, 0});
    CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(wrong)), InputError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.mgtc"), InputError);
}
