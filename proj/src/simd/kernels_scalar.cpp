#include "mgt/simd/kernels.hpp"

namespace mgt::simd::scalar {

namespace {

template <typename T>
T dot_impl(const T* a, const T* b, std::size_t n) noexcept {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
void axpy_impl(T alpha, const T* x, T* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_impl(T alpha, T* x, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) noexcept { return dot_impl(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) noexcept { return dot_impl(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept { axpy_impl(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept { axpy_impl(alpha, x, y, n); }
void scale(float alpha, float* x, std::size_t n) noexcept { scale_impl(alpha, x, n); }
void scale(double alpha, double* x, std::size_t n) noexcept { scale_impl(alpha, x, n); }

}  // namespace mgt::simd::scalar
