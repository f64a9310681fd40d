#include "hybridq/kernels.hpp"

#include <immintrin.h>

// AVX2/FMA variants, 4 doubles per lane group. lut_scan vectorizes across
// items so each item's per-m accumulation order matches the scalar kernel
// exactly (vertical adds), which keeps table scores bit-identical between
// backends.

namespace hybridq::kernels {
namespace {

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm_avx2(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(a + i);
        acc0 = _mm256_fmadd_pd(v, v, acc0);
    }
    double acc = hsum(acc0);
    for (; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double s, double* x, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(vs, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= s;
}

void lut_scan_avx2(const double* table, std::size_t m_count, std::size_t k_count,
                   const std::uint16_t* codes, std::size_t n_items, double* scores) {
    std::size_t i = 0;
    for (; i + 4 <= n_items; i += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t m = 0; m < m_count; ++m) {
            const std::uint16_t* c = codes + m * n_items + i;
            __m128i idx = _mm_set_epi32(c[3], c[2], c[1], c[0]);
            acc = _mm256_add_pd(acc, _mm256_i32gather_pd(table + m * k_count, idx, 8));
        }
        _mm256_storeu_pd(scores + i, _mm256_add_pd(_mm256_loadu_pd(scores + i), acc));
    }
    for (; i < n_items; ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < m_count; ++m) {
            acc += table[m * k_count + codes[m * n_items + i]];
        }
        scores[i] += acc;
    }
}

}  // namespace

namespace detail {
const KernelTable& avx2_table() {
    static const KernelTable t{dot_avx2, squared_norm_avx2, axpy_avx2, scale_avx2,
                               lut_scan_avx2};
    return t;
}
}  // namespace detail

}  // namespace hybridq::kernels
