#include "hybridq/frontend.hpp"

#include <cmath>
#include <stdexcept>

#include "hybridq/kernels.hpp"

namespace hybridq {

namespace {
constexpr double kNormEps = 1e-12;  // added inside the sqrt
constexpr double kDegenerateNorm = 1e-9;
}  // namespace

std::vector<double> gate_weights(std::span<const double> cls,
                                 const ParameterSet& params) {
    const auto& cfg = params.config;
    if (cls.size() != cfg.text_dim) {
        throw std::invalid_argument("gate_weights: cls dimension mismatch");
    }
    std::vector<double> w(cfg.experts);
    for (std::size_t e = 0; e < cfg.experts; ++e) {
        w[e] = kernels::dot(params.gate_vectors.ptr() + e * cfg.text_dim, cls.data(),
                            cfg.text_dim);
    }
    kernels::softmax_inplace(w.data(), w.size());
    return w;
}

std::vector<double> coarse_query_embed(std::span<const double> cls,
                                       const ParameterSet& params,
                                       CoarseQueryTrace* trace) {
    const auto& cfg = params.config;
    const std::size_t D = cfg.embed_dim;
    const std::size_t Dt = cfg.text_dim;
    if (cls.size() != Dt) {
        throw std::invalid_argument("coarse_query_embed: cls dimension mismatch");
    }

    std::vector<double> weights = gate_weights(cls, params);
    VecArray raw(cfg.experts, D);
    VecArray unit(cfg.experts, D);
    std::vector<double> norms(cfg.experts);

    std::vector<double> out(D, 0.0);
    for (std::size_t e = 0; e < cfg.experts; ++e) {
        double* u = raw.row(e);
        const double* psi = params.expert_proj.ptr() + e * D * Dt;
        for (std::size_t r = 0; r < D; ++r) {
            u[r] = kernels::dot(psi + r * Dt, cls.data(), Dt);
        }
        const double norm = std::sqrt(kernels::squared_norm(u, D) + kNormEps);
        norms[e] = norm;
        double* uu = unit.row(e);
        for (std::size_t r = 0; r < D; ++r) uu[r] = u[r] / norm;
        kernels::axpy(weights[e], uu, out.data(), D);
    }

    if (trace != nullptr) {
        trace->gate_weights = std::move(weights);
        trace->proj_raw = std::move(raw);
        trace->proj_unit = std::move(unit);
        trace->proj_norms = std::move(norms);
    }
    return out;
}

void coarse_query_backward(std::span<const double> cls, const ParameterSet& params,
                           const CoarseQueryTrace& trace,
                           std::span<const double> d_out, Gradients& grads) {
    const auto& cfg = params.config;
    const std::size_t D = cfg.embed_dim;
    const std::size_t Dt = cfg.text_dim;

    std::vector<double> d_gate(cfg.experts, 0.0);
    for (std::size_t e = 0; e < cfg.experts; ++e) {
        const double w = trace.gate_weights[e];
        const double* uu = trace.proj_unit.row(e);
        const double* u = trace.proj_raw.row(e);
        const double norm = trace.proj_norms[e];

        // out = sum_e w_e * unit_e
        d_gate[e] = kernels::dot(d_out.data(), uu, D);

        // through the normalization: d_u = (g - u * (u . g) / norm^2) / norm
        // with g = w_e * d_out and norm carrying the eps guard.
        const double udotg = kernels::dot(u, d_out.data(), D) * w;
        const double inv_norm = 1.0 / norm;
        const double coef = udotg / (norm * norm * norm);
        std::vector<double> d_u(D);
        for (std::size_t r = 0; r < D; ++r) {
            d_u[r] = w * d_out[r] * inv_norm - coef * u[r];
        }

        // u = Psi_e cls  =>  dPsi_e[r] += d_u[r] * cls
        double* d_psi = grads.expert_proj.ptr() + e * D * Dt;
        for (std::size_t r = 0; r < D; ++r) {
            kernels::axpy(d_u[r], cls.data(), d_psi + r * Dt, Dt);
        }
    }

    // softmax backward onto the gating logits, then onto the gate vectors.
    double dot_wg = 0.0;
    for (std::size_t e = 0; e < cfg.experts; ++e) {
        dot_wg += trace.gate_weights[e] * d_gate[e];
    }
    for (std::size_t e = 0; e < cfg.experts; ++e) {
        const double d_logit = trace.gate_weights[e] * (d_gate[e] - dot_wg);
        kernels::axpy(d_logit, cls.data(), grads.gate_vectors.ptr() + e * Dt, Dt);
    }
}

std::vector<double> coarse_item_embed(const VecArray& agg_tokens) {
    if (agg_tokens.size() == 0) {
        throw std::invalid_argument("coarse_item_embed: no AGG tokens");
    }
    const std::size_t D = agg_tokens.dim;
    std::vector<double> mean(D, 0.0);
    const double inv = 1.0 / static_cast<double>(agg_tokens.size());
    for (std::size_t i = 0; i < agg_tokens.size(); ++i) {
        kernels::axpy(inv, agg_tokens.row(i), mean.data(), D);
    }
    const double norm = std::sqrt(kernels::squared_norm(mean.data(), D));
    if (norm < kDegenerateNorm) {
        throw std::invalid_argument("coarse_item_embed: degenerate item (zero AGG mean)");
    }
    kernels::scale(1.0 / norm, mean.data(), D);
    return mean;
}

VecArray project_query_tokens(const VecArray& tokens, const ParameterSet& params) {
    const auto& cfg = params.config;
    if (tokens.dim != cfg.text_dim) {
        throw std::invalid_argument("project_query_tokens: token dimension mismatch");
    }
    const std::size_t D = cfg.embed_dim;
    const std::size_t Dt = cfg.text_dim;
    VecArray out(tokens.size(), D);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const double* tok = tokens.row(i);
        double* dst = out.row(i);
        for (std::size_t r = 0; r < D; ++r) {
            dst[r] = kernels::dot(params.token_proj.ptr() + r * Dt, tok, Dt);
        }
    }
    return out;
}

void project_query_tokens_backward(const VecArray& tokens, const VecArray& d_projected,
                                   Gradients& grads) {
    const std::size_t Dt = tokens.dim;
    const std::size_t D = d_projected.dim;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const double* tok = tokens.row(i);
        const double* dp = d_projected.row(i);
        for (std::size_t r = 0; r < D; ++r) {
            kernels::axpy(dp[r], tok, grads.token_proj.ptr() + r * Dt, Dt);
        }
    }
}

}  // namespace hybridq
