#include "hybridq/kernels.hpp"

#include <arm_neon.h>

// NEON variants for aarch64 (2 doubles per vector). There is no gather on
// NEON, so lut_scan keeps the scalar walk; the reductions still help on the
// dot-product heavy paths.

namespace hybridq::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    for (; i + 2 <= n; i += 2) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    }
    double acc = vaddvq_f64(acc0) + vaddvq_f64(acc1);
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm_neon(const double* a, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(a + i);
        acc0 = vfmaq_f64(acc0, v, v);
    }
    double acc = vaddvq_f64(acc0);
    for (; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vy = vld1q_f64(y + i);
        vy = vfmaq_f64(vy, va, vld1q_f64(x + i));
        vst1q_f64(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(double s, double* x, std::size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(x + i, vmulq_f64(vs, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) x[i] *= s;
}

void lut_scan_neon(const double* table, std::size_t m_count, std::size_t k_count,
                   const std::uint16_t* codes, std::size_t n_items, double* scores) {
    for (std::size_t i = 0; i < n_items; ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < m_count; ++m) {
            acc += table[m * k_count + codes[m * n_items + i]];
        }
        scores[i] += acc;
    }
}

}  // namespace

namespace detail {
const KernelTable& neon_table() {
    static const KernelTable t{dot_neon, squared_norm_neon, axpy_neon, scale_neon,
                               lut_scan_neon};
    return t;
}
}  // namespace detail

}  // namespace hybridq::kernels
