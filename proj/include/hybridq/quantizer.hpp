#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hybridq/parameters.hpp"

namespace hybridq {

constexpr double kSegmentEps = 1e-12;   // below this a segment counts as zero
constexpr double kCodewordEps = 1e-12;  // added inside the codeword norm

// Codewords of one level normalized once for read-heavy inference paths.
// Produced by the same per-codeword normalization the training path applies,
// so both routes see identical values.
Tensor normalize_codebook(const Tensor& codebook);

struct SoftQuantTrace {
    std::vector<double> seg_norms;      // M
    std::vector<double> unit_segs;      // M x d (zero rows for zero segments)
    std::vector<double> attention;      // M x K, row-stochastic soft code
    std::vector<double> reconstruction; // D
};

// Codebook attention: per sub-space, normalize segment and codewords, take
// softmax of alpha-scaled inner products, and reconstruct as the convex
// combination of normalized codewords. A zero segment yields uniform
// attention (the zero-logit softmax) and is excluded from normalization.
void soft_quantize(std::span<const double> x, const Tensor& codebook, double alpha,
                   SoftQuantTrace& out);

// Exact adjoint of soft_quantize: accumulates d_x and d_codebook from the
// upstream reconstruction gradient.
void soft_quantize_backward(std::span<const double> x, const Tensor& codebook,
                            double alpha, const SoftQuantTrace& trace,
                            std::span<const double> d_recon, std::span<double> d_x,
                            Tensor& d_codebook);

struct HardQuantResult {
    std::vector<std::uint16_t> indices;  // M
    std::vector<double> reconstruction;  // D, concatenated normalized codewords
};

// Argmax codeword per sub-space on the normalized inner products; ties break
// to the lowest index, zero segments index 0 by convention.
HardQuantResult hard_quantize(std::span<const double> x, const Tensor& codebook);

// Same argmax against a pre-normalized codebook (inference fast path).
HardQuantResult hard_quantize_prenormalized(std::span<const double> x,
                                            const Tensor& unit_codebook);

}  // namespace hybridq
