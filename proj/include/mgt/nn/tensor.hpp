#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mgt::nn {

// Row-major dense tensor of rank 0..2. Training runs in float; double exists
// for gradient checking.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, T fill = T(0));

    static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T(0)) { return Tensor({rows, cols}, fill); }
    static Tensor vector(std::size_t n, T fill = T(0)) { return Tensor({n}, fill); }
    static Tensor scalar(T v) { return Tensor({1, 1}, v); }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    // Rank-1 tensors act as a single row.
    std::size_t rows() const noexcept { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    T operator[](std::size_t i) const noexcept { return data_[i]; }
    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    T operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols(), cols()}; }

    bool same_shape(const Tensor& o) const noexcept { return rows() == o.rows() && cols() == o.cols(); }
    void fill(T v);
    bool all_finite() const noexcept;

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad = Tensor<T>(value.shape()); }
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mgt::nn
