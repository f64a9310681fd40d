#include "hybridq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hybridq::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double s, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= s;
}

void lut_scan_scalar(const double* table, std::size_t m_count, std::size_t k_count,
                     const std::uint16_t* codes, std::size_t n_items, double* scores) {
    for (std::size_t i = 0; i < n_items; ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < m_count; ++m) {
            acc += table[m * k_count + codes[m * n_items + i]];
        }
        scores[i] += acc;
    }
}

const detail::KernelTable* g_active = nullptr;
Backend g_active_backend = Backend::Scalar;

void activate(Backend b) {
    switch (b) {
        case Backend::Scalar:
            g_active = &detail::scalar_table();
            break;
#if defined(HYBRIDQ_BUILD_AVX2)
        case Backend::Avx2:
            g_active = &detail::avx2_table();
            break;
#endif
#if defined(HYBRIDQ_BUILD_NEON)
        case Backend::Neon:
            g_active = &detail::neon_table();
            break;
#endif
        default:
            throw std::runtime_error("kernel backend not supported on this build");
    }
    g_active_backend = b;
}

const detail::KernelTable& table() {
    if (g_active == nullptr) activate(detect_best());
    return *g_active;
}

}  // namespace

namespace detail {
const KernelTable& scalar_table() {
    static const KernelTable t{dot_scalar, squared_norm_scalar, axpy_scalar,
                               scale_scalar, lut_scan_scalar};
    return t;
}
}  // namespace detail

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "unknown";
}

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::Scalar:
            return true;
        case Backend::Avx2:
#if defined(HYBRIDQ_BUILD_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::Neon:
#if defined(HYBRIDQ_BUILD_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Backend detect_best() {
    if (backend_supported(Backend::Avx2)) return Backend::Avx2;
    if (backend_supported(Backend::Neon)) return Backend::Neon;
    return Backend::Scalar;
}

Backend active_backend() {
    if (g_active == nullptr) activate(detect_best());
    return g_active_backend;
}

void set_backend(Backend b) {
    if (!backend_supported(b)) {
        throw std::runtime_error("kernel backend not supported: " +
                                 std::string(backend_name(b)));
    }
    activate(b);
}

double dot(const double* a, const double* b, std::size_t n) {
    return table().dot(a, b, n);
}

double squared_norm(const double* a, std::size_t n) {
    return table().squared_norm(a, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    table().axpy(alpha, x, y, n);
}

void scale(double s, double* x, std::size_t n) {
    table().scale(s, x, n);
}

void lut_scan(const double* tab, std::size_t m_count, std::size_t k_count,
              const std::uint16_t* codes, std::size_t n_items, double* scores) {
    table().lut_scan(tab, m_count, k_count, codes, n_items, scores);
}

void softmax_inplace(double* x, std::size_t n) {
    if (n == 0) return;
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

}  // namespace hybridq::kernels
