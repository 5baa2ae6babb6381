#include "mgt/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace mgt::nn {

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, T fill) : shape_(std::move(shape)) {
    const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
    data_.assign(n, fill);
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
std::string Tensor<T>::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mgt::nn
