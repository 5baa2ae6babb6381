#include <cmath>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mgt/simd/kernels.hpp"

using namespace mgt::simd;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<T> u(T(-2), T(2));
    std::vector<T> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

template <typename T>
T abs_dot(const T* a, const T* b, std::size_t n) {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] * b[i]);
    return s;
}

// Every vector backend compiled in and supported on this CPU.
std::vector<Backend> vector_backends() {
    std::vector<Backend> out;
    for (Backend b : {Backend::Avx2, Backend::Neon}) {
        if (backend_available(b)) out.push_back(b);
    }
    return out;
}

template <typename T>
T vec_dot(Backend b, const T* x, const T* y, std::size_t n) {
#if defined(MGT_HAVE_AVX2)
    if (b == Backend::Avx2) return avx2::dot(x, y, n);
#endif
#if defined(MGT_HAVE_NEON)
    if (b == Backend::Neon) return neon::dot(x, y, n);
#endif
    (void)b;
    return scalar::dot(x, y, n);
}

template <typename T>
void vec_axpy(Backend b, T alpha, const T* x, T* y, std::size_t n) {
#if defined(MGT_HAVE_AVX2)
    if (b == Backend::Avx2) return avx2::axpy(alpha, x, y, n);
#endif
#if defined(MGT_HAVE_NEON)
    if (b == Backend::Neon) return neon::axpy(alpha, x, y, n);
#endif
    (void)b;
    scalar::axpy(alpha, x, y, n);
}

template <typename T>
void vec_scale(Backend b, T alpha, T* x, std::size_t n) {
#if defined(MGT_HAVE_AVX2)
    if (b == Backend::Avx2) return avx2::scale(alpha, x, n);
#endif
#if defined(MGT_HAVE_NEON)
    if (b == Backend::Neon) return neon::scale(alpha, x, n);
#endif
    (void)b;
    scalar::scale(alpha, x, n);
}

template <typename T>
void check_equivalence(Backend b, T tol) {
    std::mt19937_64 rng(17);
    for (std::size_t n = 0; n <= 70; ++n) {
        for (std::size_t offset : {0u, 1u, 3u}) {
            auto a = random_vec<T>(n + offset, rng);
            auto c = random_vec<T>(n + offset, rng);
            const T* pa = a.data() + offset;
            const T* pc = c.data() + offset;

            const T ref = scalar::dot(pa, pc, n);
            const T got = vec_dot(b, pa, pc, n);
            CHECK(std::abs(ref - got) <= tol * (abs_dot(pa, pc, n) + T(1)));

            auto y_ref = c;
            auto y_vec = c;
            scalar::axpy(T(0.37), pa, y_ref.data() + offset, n);
            vec_axpy(b, T(0.37), pa, y_vec.data() + offset, n);
            for (std::size_t i = 0; i < y_ref.size(); ++i) CHECK(std::abs(y_ref[i] - y_vec[i]) <= tol * T(4));

            auto s_ref = a;
            auto s_vec = a;
            scalar::scale(T(-1.25), s_ref.data() + offset, n);
            vec_scale(b, T(-1.25), s_vec.data() + offset, n);
            CHECK(s_ref == s_vec);
        }
    }
}

}  // namespace

TEST_CASE("scalar kernels match direct loops") {
    const std::vector<float> a{1, 2, 3}, b{4, -5, 6};
    CHECK(scalar::dot(a.data(), b.data(), 3) == 12.0f);
    std::vector<double> y{1, 1, 1};
    const std::vector<double> x{1, 2, 3};
    scalar::axpy(2.0, x.data(), y.data(), 3);
    CHECK(y == std::vector<double>{3, 5, 7});
    scalar::scale(0.5, y.data(), 3);
    CHECK(y == std::vector<double>{1.5, 2.5, 3.5});
}

TEST_CASE("vector backends match the scalar reference") {
    const auto backends = vector_backends();
    if (backends.empty()) MESSAGE("no vector backend on this machine; scalar only");
    for (Backend b : backends) {
        CAPTURE(backend_name(b));
        check_equivalence<float>(b, 1e-5f);
        check_equivalence<double>(b, 1e-13);
    }
}

TEST_CASE("runtime dispatch switches backends") {
    CHECK(backend_available(Backend::Scalar));
    const Backend before = active_backend();
    if (std::getenv("MGT_SIMD") == nullptr) CHECK(before == best_backend());

    std::mt19937_64 rng(2);
    auto a = random_vec<float>(37, rng);
    auto c = random_vec<float>(37, rng);
    set_backend(Backend::Scalar);
    CHECK(active_backend() == Backend::Scalar);
    CHECK(dot(std::span<const float>(a), std::span<const float>(c)) == scalar::dot(a.data(), c.data(), a.size()));

    for (Backend b : vector_backends()) {
        set_backend(b);
        CHECK(active_backend() == b);
        CHECK(dot(std::span<const float>(a), std::span<const float>(c)) == vec_dot(b, a.data(), c.data(), a.size()));
    }
    for (Backend b : {Backend::Avx2, Backend::Neon}) {
        if (!backend_available(b)) CHECK_THROWS_AS(set_backend(b), std::invalid_argument);
    }
    set_backend(before);
    CHECK(backend_name(Backend::Avx2) == "avx2");
}
