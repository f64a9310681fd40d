#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Data-parallel inner loops used throughout the engine. Every operation has a
// scalar reference implementation; on x86 with AVX2 (and on aarch64 with NEON)
// a vectorized variant is selected at runtime. The two variants are
// equivalence-tested against each other.
//
// Bit-exactness contract: lut_scan accumulates each item's entries in
// ascending m order regardless of backend, so table-based scores are
// bit-identical to a scalar walk of the same table. dot/squared_norm may
// reassociate the reduction, so different backends agree only to rounding;
// within one process a single backend serves every call site, which keeps
// paired computations (table build vs. reconstruction) exactly consistent.

namespace hybridq::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend b);
bool backend_supported(Backend b);
Backend detect_best();
Backend active_backend();
void set_backend(Backend b);  // throws std::runtime_error if unsupported

// <a, b>
double dot(const double* a, const double* b, std::size_t n);

// sum a[i]^2
double squared_norm(const double* a, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// x *= s
void scale(double s, double* x, std::size_t n);

// For each item i: scores[i] += sum over m of table[m*k_count + codes[m*n_items + i]],
// with the inner sum taken in ascending m order starting from 0. codes are
// stored m-major (all items' index for sub-space 0, then sub-space 1, ...).
void lut_scan(const double* table, std::size_t m_count, std::size_t k_count,
              const std::uint16_t* codes, std::size_t n_items, double* scores);

// In-place softmax with max subtraction. Always scalar; n is small everywhere
// it is used.
void softmax_inplace(double* x, std::size_t n);

namespace detail {
struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*squared_norm)(const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    void (*lut_scan)(const double*, std::size_t, std::size_t, const std::uint16_t*,
                     std::size_t, double*);
};
const KernelTable& scalar_table();
#if defined(HYBRIDQ_BUILD_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(HYBRIDQ_BUILD_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace hybridq::kernels
