#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mgt/simd/kernels.hpp"

namespace mgt::simd {

namespace {

struct KernelTable {
    Backend backend;
    float (*dot_f)(const float*, const float*, std::size_t) noexcept;
    double (*dot_d)(const double*, const double*, std::size_t) noexcept;
    void (*axpy_f)(float, const float*, float*, std::size_t) noexcept;
    void (*axpy_d)(double, const double*, double*, std::size_t) noexcept;
    void (*scale_f)(float, float*, std::size_t) noexcept;
    void (*scale_d)(double, double*, std::size_t) noexcept;
};

constexpr KernelTable kScalarTable{Backend::Scalar, scalar::dot,  scalar::dot,   scalar::axpy,
                                   scalar::axpy,    scalar::scale, scalar::scale};

#if defined(MGT_HAVE_AVX2)
constexpr KernelTable kAvx2Table{Backend::Avx2, avx2::dot,   avx2::dot,  avx2::axpy,
                                 avx2::axpy,    avx2::scale, avx2::scale};
#endif

#if defined(MGT_HAVE_NEON)
constexpr KernelTable kNeonTable{Backend::Neon, neon::dot,   neon::dot,  neon::axpy,
                                 neon::axpy,    neon::scale, neon::scale};
#endif

const KernelTable* table_for(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar:
            return &kScalarTable;
        case Backend::Avx2:
#if defined(MGT_HAVE_AVX2)
            return &kAvx2Table;
#else
            return nullptr;
#endif
        case Backend::Neon:
#if defined(MGT_HAVE_NEON)
            return &kNeonTable;
#else
            return nullptr;
#endif
    }
    return nullptr;
}

const KernelTable* initial_table() noexcept {
    if (const char* env = std::getenv("MGT_SIMD")) {
        const std::string want(env);
        for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
            if (want == backend_name(b) && backend_available(b)) return table_for(b);
        }
    }
    return table_for(best_backend());
}

std::atomic<const KernelTable*>& current() noexcept {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

inline const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

}  // namespace

std::string_view backend_name(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar:
            return "scalar";
        case Backend::Avx2:
            return "avx2";
        case Backend::Neon:
            return "neon";
    }
    return "unknown";
}

bool backend_available(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar:
            return true;
        case Backend::Avx2:
#if defined(MGT_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::Neon:
#if defined(MGT_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Backend best_backend() noexcept {
    if (backend_available(Backend::Avx2)) return Backend::Avx2;
    if (backend_available(Backend::Neon)) return Backend::Neon;
    return Backend::Scalar;
}

Backend active_backend() noexcept { return active().backend; }

void set_backend(Backend b) {
    if (!backend_available(b)) {
        throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(b)));
    }
    current().store(table_for(b), std::memory_order_relaxed);
}

float dot(std::span<const float> a, std::span<const float> b) noexcept {
    assert(a.size() == b.size());
    return active().dot_f(a.data(), b.data(), a.size());
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    assert(a.size() == b.size());
    return active().dot_d(a.data(), b.data(), a.size());
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept {
    assert(x.size() == y.size());
    active().axpy_f(alpha, x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
    assert(x.size() == y.size());
    active().axpy_d(alpha, x.data(), y.data(), x.size());
}

void scale(float alpha, std::span<float> x) noexcept { active().scale_f(alpha, x.data(), x.size()); }
void scale(double alpha, std::span<double> x) noexcept { active().scale_d(alpha, x.data(), x.size()); }

}  // namespace mgt::simd
