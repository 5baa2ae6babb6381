#pragma once

// Vector kernels used by the dense inner loops (matmul rows, LINE updates,
// neighborhood aggregation). Every kernel has a scalar reference version;
// vectorized variants are selected once at startup from CPU features and
// can be overridden with set_backend() or MGT_SIMD=scalar|avx2|neon.

#include <cstddef>
#include <span>
#include <string_view>

namespace mgt::simd {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend b) noexcept;

// True when the backend was compiled in and the running CPU supports it.
bool backend_available(Backend b) noexcept;

Backend best_backend() noexcept;
Backend active_backend() noexcept;

// Throws std::invalid_argument if the backend is unavailable.
void set_backend(Backend b);

// Dispatched kernels. Spans must have equal length (checked in debug builds).
float dot(std::span<const float> a, std::span<const float> b) noexcept;
double dot(std::span<const double> a, std::span<const double> b) noexcept;

// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept;
void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept;

// x *= alpha
void scale(float alpha, std::span<float> x) noexcept;
void scale(double alpha, std::span<double> x) noexcept;

namespace scalar {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(float alpha, float* x, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
}  // namespace scalar

#if defined(MGT_HAVE_AVX2)
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(float alpha, float* x, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
}  // namespace avx2
#endif

#if defined(MGT_HAVE_NEON)
namespace neon {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(float alpha, float* x, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
}  // namespace neon
#endif

}  // namespace mgt::simd
