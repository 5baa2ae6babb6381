#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mgt/nn/ops.hpp"

namespace mgt::test {

using nn::Tape;
using nn::Tensor;
using nn::Var;

using LossFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

inline Tensor<double> random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    auto t = Tensor<double>::matrix(r, c);
    for (auto& x : t.values()) x = nd(rng);
    return t;
}

struct GradCheckResult {
    double worst_rel = 0.0;
    std::size_t checked = 0;
};

inline double loss_value(const std::vector<Tensor<double>>& inputs, const LossFn& f) {
    Tape<double> t(false);
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(t.constant(x));
    return t.value(f(t, vars))[0];
}

// Central differences against reverse mode for every element of every input.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(std::vector<Tensor<double>> inputs, const LossFn& f, double h = 1e-5,
                                  double floor = 1e-6) {
    Tape<double> t;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(t.input(x));
    t.backward(f(t, vars));

    GradCheckResult res;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<double> analytic = t.grad(vars[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double orig = inputs[i][j];
            inputs[i][j] = orig + h;
            const double up = loss_value(inputs, f);
            inputs[i][j] = orig - h;
            const double down = loss_value(inputs, f);
            inputs[i][j] = orig;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic.empty() ? 0.0 : analytic[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            res.worst_rel = std::max(res.worst_rel, std::abs(a - numeric) / denom);
            ++res.checked;
        }
    }
    return res;
}

// Random-weighted sum to reduce any output to a scalar.
inline Var reduce(Tape<double>& t, Var out, std::uint64_t seed = 77) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> w(t.value(out).size());
    for (auto& x : w) x = nd(rng);
    return nn::weighted_sum<double>(t, out, w);
}

using ParamLossFn = std::function<Var(Tape<double>&)>;

// Finite differences on `count` randomly chosen parameter entries (all
// entries when count == 0). The loss builder must read parameters through
// t.param(), so a gradient-free tape sees the perturbed values.
inline GradCheckResult param_grad_check(const std::vector<nn::Parameter<double>*>& params, const ParamLossFn& f,
                                        std::size_t count, std::uint64_t seed, double h = 1e-5,
                                        double floor = 1e-6) {
    for (auto* p : params) p->zero_grad();
    {
        Tape<double> t;
        t.backward(f(t));
    }
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    if (count == 0) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            for (std::size_t j = 0; j < params[i]->value.size(); ++j) picks.emplace_back(i, j);
        }
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
        while (picks.size() < count) {
            const std::size_t i = pick_param(rng);
            if (params[i]->value.size() == 0) continue;
            std::uniform_int_distribution<std::size_t> pick_elem(0, params[i]->value.size() - 1);
            picks.emplace_back(i, pick_elem(rng));
        }
    }
    auto eval = [&] {
        Tape<double> t(false);
        return t.value(f(t))[0];
    };
    GradCheckResult res;
    for (const auto& [i, j] : picks) {
        double& x = params[i]->value[j];
        const double orig = x;
        x = orig + h;
        const double up = eval();
        x = orig - h;
        const double down = eval();
        x = orig;
        const double numeric = (up - down) / (2 * h);
        const double a = params[i]->grad[j];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        res.worst_rel = std::max(res.worst_rel, std::abs(a - numeric) / denom);
        ++res.checked;
    }
    return res;
}

}  // namespace mgt::test
