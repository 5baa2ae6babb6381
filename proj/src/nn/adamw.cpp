#include "mgt/nn/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace mgt::nn {

template <typename T>
void AdamW<T>::step(const std::vector<Parameter<T>*>& params) {
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (m_.size() != params.size()) throw std::logic_error("AdamW: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.lr);
    const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<T>& p = *params[i];
        if (p.value.size() != m_[i].size()) throw std::logic_error("AdamW: shape changed for " + p.name);
        const bool has_grad = p.grad.size() == p.value.size();
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const T g = has_grad ? p.grad[j] : T(0);
            m_[i][j] = b1 * m_[i][j] + (T(1) - b1) * g;
            v_[i][j] = b2 * v_[i][j] + (T(1) - b2) * g * g;
            const T mhat = m_[i][j] / static_cast<T>(bc1);
            const T vhat = v_[i][j] / static_cast<T>(bc2);
            p.value[j] = p.value[j] * decay - lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace mgt::nn
