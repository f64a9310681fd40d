#include "hybridq/ghostvlad.hpp"

#include <cmath>
#include <stdexcept>

#include "hybridq/kernels.hpp"

namespace hybridq {

std::vector<double> vlad_assign(const VecArray& tokens, const ParameterSet& params,
                                Mode mode, BnStats* stats_out,
                                std::vector<double>* logits_out,
                                std::vector<double>* xhat_out) {
    const auto& cfg = params.config;
    const std::size_t D = cfg.embed_dim;
    const std::size_t C = cfg.levels();  // channels: ghost + L active
    const std::size_t N = tokens.size();
    if (N == 0) throw std::invalid_argument("vlad_assign: empty token set");
    if (tokens.dim != D) throw std::invalid_argument("vlad_assign: token dim mismatch");

    std::vector<double> logits(N * C);
    for (std::size_t j = 0; j < N; ++j) {
        const double* x = tokens.row(j);
        for (std::size_t l = 0; l < C; ++l) {
            logits[j * C + l] = kernels::dot(params.assign_weights.ptr() + l * D, x, D);
        }
    }

    BnStats stats;
    stats.mean.assign(C, 0.0);
    stats.inv_std.assign(C, 0.0);
    stats.var.assign(C, 0.0);
    if (mode == Mode::Train) {
        const double inv_n = 1.0 / static_cast<double>(N);
        for (std::size_t l = 0; l < C; ++l) {
            double m = 0.0;
            for (std::size_t j = 0; j < N; ++j) m += logits[j * C + l];
            m *= inv_n;
            double v = 0.0;
            for (std::size_t j = 0; j < N; ++j) {
                const double dlt = logits[j * C + l] - m;
                v += dlt * dlt;
            }
            v *= inv_n;  // biased, as used in the normalization
            stats.mean[l] = m;
            stats.var[l] = v;
            stats.inv_std[l] = 1.0 / std::sqrt(v + kBnEps);
        }
    } else {
        for (std::size_t l = 0; l < C; ++l) {
            stats.mean[l] = params.bn_running_mean.data[l];
            stats.var[l] = params.bn_running_var.data[l];
            stats.inv_std[l] = 1.0 / std::sqrt(stats.var[l] + kBnEps);
        }
    }

    std::vector<double> xhat(N * C);
    std::vector<double> assign(N * C);
    for (std::size_t j = 0; j < N; ++j) {
        for (std::size_t l = 0; l < C; ++l) {
            const double xh = (logits[j * C + l] - stats.mean[l]) * stats.inv_std[l];
            xhat[j * C + l] = xh;
            assign[j * C + l] = params.bn_scale.data[l] * xh + params.bn_shift.data[l];
        }
        kernels::softmax_inplace(assign.data() + j * C, C);
    }

    if (stats_out != nullptr) *stats_out = std::move(stats);
    if (logits_out != nullptr) *logits_out = std::move(logits);
    if (xhat_out != nullptr) *xhat_out = std::move(xhat);
    return assign;
}

VecArray vlad_aggregate(const VecArray& tokens, std::span<const std::size_t> bag_offsets,
                        const std::vector<double>& assignments,
                        const ParameterSet& params, std::vector<double>* residuals_out,
                        std::vector<double>* res_norms_out) {
    const auto& cfg = params.config;
    const std::size_t D = cfg.embed_dim;
    const std::size_t L = cfg.clusters;
    const std::size_t C = cfg.levels();
    const std::size_t n_inst = bag_offsets.size() - 1;

    VecArray fine(n_inst * L, D);
    std::vector<double> residuals(n_inst * L * D, 0.0);
    std::vector<double> res_norms(n_inst * L, 0.0);

    for (std::size_t b = 0; b < n_inst; ++b) {
        for (std::size_t l = 1; l <= L; ++l) {  // skip the ghost column
            double* r = residuals.data() + (b * L + l - 1) * D;
            const double* c = params.centroids.ptr() + l * D;
            double a_sum = 0.0;
            for (std::size_t j = bag_offsets[b]; j < bag_offsets[b + 1]; ++j) {
                const double a = assignments[j * C + l];
                kernels::axpy(a, tokens.row(j), r, D);
                a_sum += a;
            }
            kernels::axpy(-a_sum, c, r, D);

            const double norm = std::sqrt(kernels::squared_norm(r, D));
            res_norms[b * L + l - 1] = norm;
            double* f = fine.row(b * L + l - 1);
            if (norm < kResidualEps) {
                for (std::size_t k = 0; k < D; ++k) f[k] = 0.0;
            } else {
                const double inv = 1.0 / norm;
                for (std::size_t k = 0; k < D; ++k) f[k] = r[k] * inv;
            }
        }
    }

    if (residuals_out != nullptr) *residuals_out = std::move(residuals);
    if (res_norms_out != nullptr) *res_norms_out = std::move(res_norms);
    return fine;
}

VecArray vlad_forward(const VecArray& tokens, std::span<const std::size_t> bag_offsets,
                      const ParameterSet& params, Mode mode, VladTrace* trace) {
    if (trace != nullptr) {
        trace->assign = vlad_assign(tokens, params, mode, &trace->stats, &trace->logits,
                                    &trace->xhat);
        return vlad_aggregate(tokens, bag_offsets, trace->assign, params,
                              &trace->residuals, &trace->res_norms);
    }
    const auto assign = vlad_assign(tokens, params, mode);
    return vlad_aggregate(tokens, bag_offsets, assign, params);
}

void vlad_backward(const VecArray& tokens, std::span<const std::size_t> bag_offsets,
                   const ParameterSet& params, const VladTrace& trace,
                   const VecArray& d_fine, Gradients& grads, VecArray& d_tokens) {
    const auto& cfg = params.config;
    const std::size_t D = cfg.embed_dim;
    const std::size_t L = cfg.clusters;
    const std::size_t C = cfg.levels();
    const std::size_t N = tokens.size();
    const std::size_t n_inst = bag_offsets.size() - 1;

    std::vector<double> d_assign(N * C, 0.0);

    // Through the per-level normalization and the residual aggregation.
    for (std::size_t b = 0; b < n_inst; ++b) {
        for (std::size_t l = 1; l <= L; ++l) {
            const std::size_t row = b * L + l - 1;
            const double* g_f = d_fine.row(row);
            const double norm = trace.res_norms[row];
            if (norm < kResidualEps) continue;  // zero output, zero gradient

            const double* r = trace.residuals.data() + row * D;
            const double inv = 1.0 / norm;
            const double rg = kernels::dot(r, g_f, D);
            const double coef = rg * inv * inv * inv;
            std::vector<double> d_r(D);
            for (std::size_t k = 0; k < D; ++k) d_r[k] = g_f[k] * inv - coef * r[k];

            // r_l = sum_j a_{j,l} (x_j - c_l)
            const double* c = params.centroids.ptr() + l * D;
            double a_sum = 0.0;
            for (std::size_t j = bag_offsets[b]; j < bag_offsets[b + 1]; ++j) {
                const double a = trace.assign[j * C + l];
                a_sum += a;
                d_assign[j * C + l] += kernels::dot(tokens.row(j), d_r.data(), D) -
                                       kernels::dot(c, d_r.data(), D);
                kernels::axpy(a, d_r.data(), d_tokens.row(j), D);
            }
            kernels::axpy(-a_sum, d_r.data(), grads.centroids.ptr() + l * D, D);
        }
    }

    // Softmax rows -> normalized logit gradients.
    std::vector<double> d_y(N * C);
    for (std::size_t j = 0; j < N; ++j) {
        const double* a = trace.assign.data() + j * C;
        const double* da = d_assign.data() + j * C;
        double s = 0.0;
        for (std::size_t l = 0; l < C; ++l) s += a[l] * da[l];
        for (std::size_t l = 0; l < C; ++l) d_y[j * C + l] = a[l] * (da[l] - s);
    }

    // Batch-norm backward per channel over the token batch.
    std::vector<double> d_logits(N * C);
    const double inv_n = 1.0 / static_cast<double>(N);
    for (std::size_t l = 0; l < C; ++l) {
        const double gamma = params.bn_scale.data[l];
        const double inv_std = trace.stats.inv_std[l];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            const double dy = d_y[j * C + l];
            sum_dy += dy;
            sum_dy_xhat += dy * trace.xhat[j * C + l];
        }
        grads.bn_shift.data[l] += sum_dy;
        grads.bn_scale.data[l] += sum_dy_xhat;
        for (std::size_t j = 0; j < N; ++j) {
            const double dy = d_y[j * C + l];
            const double xh = trace.xhat[j * C + l];
            d_logits[j * C + l] =
                gamma * inv_std * (dy - inv_n * sum_dy - xh * inv_n * sum_dy_xhat);
        }
    }

    // logits = W x
    for (std::size_t j = 0; j < N; ++j) {
        const double* x = tokens.row(j);
        for (std::size_t l = 0; l < C; ++l) {
            const double dz = d_logits[j * C + l];
            kernels::axpy(dz, x, grads.assign_weights.ptr() + l * D, D);
            kernels::axpy(dz, params.assign_weights.ptr() + l * D, d_tokens.row(j), D);
        }
    }
}

void vlad_update_running_stats(ParameterSet& params, const BnStats& stats,
                               std::size_t token_count) {
    const std::size_t C = params.config.levels();
    const double n = static_cast<double>(token_count);
    const double unbias = token_count > 1 ? n / (n - 1.0) : 1.0;
    for (std::size_t l = 0; l < C; ++l) {
        params.bn_running_mean.data[l] =
            (1.0 - kBnMomentum) * params.bn_running_mean.data[l] +
            kBnMomentum * stats.mean[l];
        params.bn_running_var.data[l] =
            (1.0 - kBnMomentum) * params.bn_running_var.data[l] +
            kBnMomentum * stats.var[l] * unbias;
    }
}

}  // namespace hybridq
