#include "hybridq/quantizer.hpp"

#include <cmath>
#include <stdexcept>

#include "hybridq/kernels.hpp"

namespace hybridq {

Tensor normalize_codebook(const Tensor& codebook) {
    const std::size_t d = codebook.shape.back();
    Tensor unit = codebook;
    const std::size_t rows = unit.size() / d;
    for (std::size_t r = 0; r < rows; ++r) {
        double* c = unit.ptr() + r * d;
        const double inv = 1.0 / std::sqrt(kernels::squared_norm(c, d) + kCodewordEps);
        kernels::scale(inv, c, d);
    }
    return unit;
}

void soft_quantize(std::span<const double> x, const Tensor& codebook, double alpha,
                   SoftQuantTrace& out) {
    const std::size_t M = codebook.shape[0];
    const std::size_t K = codebook.shape[1];
    const std::size_t d = codebook.shape[2];
    if (x.size() != M * d) throw std::invalid_argument("soft_quantize: dim mismatch");

    out.seg_norms.assign(M, 0.0);
    out.unit_segs.assign(M * d, 0.0);
    out.attention.assign(M * K, 0.0);
    out.reconstruction.assign(M * d, 0.0);

    std::vector<double> unit_cw(K * d);
    for (std::size_t m = 0; m < M; ++m) {
        const double* seg = x.data() + m * d;
        const double norm = std::sqrt(kernels::squared_norm(seg, d));
        out.seg_norms[m] = norm;

        double* useg = out.unit_segs.data() + m * d;
        if (norm >= kSegmentEps) {
            for (std::size_t k = 0; k < d; ++k) useg[k] = seg[k] / norm;
        }
        // else: zero segment stays the zero vector -> zero logits -> uniform

        const double* cw = codebook.ptr() + m * K * d;
        double* p = out.attention.data() + m * K;
        for (std::size_t i = 0; i < K; ++i) {
            double* uc = unit_cw.data() + i * d;
            const double* c = cw + i * d;
            const double inv =
                1.0 / std::sqrt(kernels::squared_norm(c, d) + kCodewordEps);
            for (std::size_t k = 0; k < d; ++k) uc[k] = c[k] * inv;
            p[i] = alpha * kernels::dot(useg, uc, d);
        }
        kernels::softmax_inplace(p, K);

        double* rec = out.reconstruction.data() + m * d;
        for (std::size_t i = 0; i < K; ++i) {
            kernels::axpy(p[i], unit_cw.data() + i * d, rec, d);
        }
    }
}

void soft_quantize_backward(std::span<const double> x, const Tensor& codebook,
                            double alpha, const SoftQuantTrace& trace,
                            std::span<const double> d_recon, std::span<double> d_x,
                            Tensor& d_codebook) {
    const std::size_t M = codebook.shape[0];
    const std::size_t K = codebook.shape[1];
    const std::size_t d = codebook.shape[2];

    std::vector<double> unit_cw(K * d);
    std::vector<double> inv_cw_norm(K);
    std::vector<double> d_unit_cw(K * d);
    std::vector<double> d_p(K);

    for (std::size_t m = 0; m < M; ++m) {
        const double* cw = codebook.ptr() + m * K * d;
        const double* p = trace.attention.data() + m * K;
        const double* useg = trace.unit_segs.data() + m * d;
        const double* g_rec = d_recon.data() + m * d;

        for (std::size_t i = 0; i < K; ++i) {
            const double* c = cw + i * d;
            const double inv =
                1.0 / std::sqrt(kernels::squared_norm(c, d) + kCodewordEps);
            inv_cw_norm[i] = inv;
            for (std::size_t k = 0; k < d; ++k) unit_cw[i * d + k] = c[k] * inv;
        }

        // recon = sum_i p_i uc_i
        std::fill(d_unit_cw.begin(), d_unit_cw.end(), 0.0);
        for (std::size_t i = 0; i < K; ++i) {
            d_p[i] = kernels::dot(g_rec, unit_cw.data() + i * d, d);
            kernels::axpy(p[i], g_rec, d_unit_cw.data() + i * d, d);
        }

        // softmax over logits_i = alpha * <useg, uc_i>
        double pdot = 0.0;
        for (std::size_t i = 0; i < K; ++i) pdot += p[i] * d_p[i];
        std::vector<double> d_useg(d, 0.0);
        for (std::size_t i = 0; i < K; ++i) {
            const double d_logit = p[i] * (d_p[i] - pdot);
            kernels::axpy(alpha * d_logit, unit_cw.data() + i * d, d_useg.data(), d);
            kernels::axpy(alpha * d_logit, useg, d_unit_cw.data() + i * d, d);
        }

        // through the codeword normalization (eps inside the norm)
        for (std::size_t i = 0; i < K; ++i) {
            const double* c = cw + i * d;
            const double* g = d_unit_cw.data() + i * d;
            const double inv = inv_cw_norm[i];
            const double cg = kernels::dot(c, g, d);
            const double coef = cg * inv * inv * inv;
            double* dst = d_codebook.ptr() + (m * K + i) * d;
            for (std::size_t k = 0; k < d; ++k) dst[k] += g[k] * inv - coef * c[k];
        }

        // through the segment normalization; zero segments pass no gradient
        const double norm = trace.seg_norms[m];
        if (norm >= kSegmentEps) {
            const double* seg = x.data() + m * d;
            const double inv = 1.0 / norm;
            const double sg = kernels::dot(seg, d_useg.data(), d);
            const double coef = sg * inv * inv * inv;
            double* dst = d_x.data() + m * d;
            for (std::size_t k = 0; k < d; ++k) {
                dst[k] += d_useg[k] * inv - coef * seg[k];
            }
        }
    }
}

HardQuantResult hard_quantize_prenormalized(std::span<const double> x,
                                            const Tensor& unit_codebook) {
    const std::size_t M = unit_codebook.shape[0];
    const std::size_t K = unit_codebook.shape[1];
    const std::size_t d = unit_codebook.shape[2];
    if (x.size() != M * d) throw std::invalid_argument("hard_quantize: dim mismatch");

    HardQuantResult res;
    res.indices.assign(M, 0);
    res.reconstruction.assign(M * d, 0.0);

    std::vector<double> useg(d);
    for (std::size_t m = 0; m < M; ++m) {
        const double* seg = x.data() + m * d;
        const double norm = std::sqrt(kernels::squared_norm(seg, d));
        const double* cw = unit_codebook.ptr() + m * K * d;

        std::size_t best = 0;
        if (norm >= kSegmentEps) {
            for (std::size_t k = 0; k < d; ++k) useg[k] = seg[k] / norm;
            double best_score = kernels::dot(useg.data(), cw, d);
            for (std::size_t i = 1; i < K; ++i) {
                const double s = kernels::dot(useg.data(), cw + i * d, d);
                if (s > best_score) {  // strict: ties keep the lowest index
                    best_score = s;
                    best = i;
                }
            }
        }
        res.indices[m] = static_cast<std::uint16_t>(best);
        double* rec = res.reconstruction.data() + m * d;
        const double* chosen = cw + best * d;
        for (std::size_t k = 0; k < d; ++k) rec[k] = chosen[k];
    }
    return res;
}

HardQuantResult hard_quantize(std::span<const double> x, const Tensor& codebook) {
    return hard_quantize_prenormalized(x, normalize_codebook(codebook));
}

}  // namespace hybridq
