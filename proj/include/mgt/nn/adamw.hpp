#pragma once

#include <cstdint>
#include <vector>

#include "mgt/nn/tensor.hpp"

namespace mgt::nn {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Adam with decoupled weight decay: value *= (1 - lr * wd) before the
// bias-corrected moment update. weight_decay = 0 gives plain Adam.
template <typename T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // The parameter list must be the same (same order and shapes) on every call.
    void step(const std::vector<Parameter<T>*>& params);

    std::uint64_t steps() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return cfg_; }

private:
    AdamWConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace mgt::nn
