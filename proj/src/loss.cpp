#include "hybridq/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hybridq/kernels.hpp"

namespace hybridq {

std::vector<double> similarity_matrix(const VecArray& queries, const VecArray& keys) {
    if (queries.dim != keys.dim) {
        throw std::invalid_argument("similarity_matrix: dimension mismatch");
    }
    const std::size_t n = queries.size();
    const std::size_t m = keys.size();
    std::vector<double> sims(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            sims[i * m + j] = kernels::dot(queries.row(i), keys.row(j), queries.dim);
        }
    }
    return sims;
}

double infonce_from_similarities(std::span<const double> sims, std::size_t n,
                                 double tau) {
    if (n == 0) throw std::invalid_argument("infonce: empty batch");
    if (!(tau > 0.0)) throw std::invalid_argument("infonce: tau must be positive");
    const double inv_tau = 1.0 / tau;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = sims.data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double lse = 0.0;
        for (std::size_t j = 0; j < n; ++j) lse += std::exp((row[j] - mx) * inv_tau);
        // log-sum-exp minus the positive logit
        total += std::log(lse) + (mx - row[i]) * inv_tau;
    }
    return total / static_cast<double>(n);
}

std::vector<double> infonce_row_softmax(std::span<const double> sims, std::size_t n,
                                        double tau) {
    std::vector<double> p(sims.begin(), sims.end());
    const double inv_tau = 1.0 / tau;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = p.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv_tau;
        kernels::softmax_inplace(row, n);
    }
    return p;
}

std::vector<double> infonce_similarity_grad(std::span<const double> sims, std::size_t n,
                                            double tau, double weight) {
    std::vector<double> g = infonce_row_softmax(sims, n, tau);
    const double c = weight / (static_cast<double>(n) * tau);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            g[i * n + j] = c * (g[i * n + j] - (i == j ? 1.0 : 0.0));
        }
    }
    return g;
}

double aqcl_loss(const VecArray& raw_queries, const VecArray& quantized_keys,
                 double tau) {
    if (raw_queries.size() != quantized_keys.size()) {
        throw std::invalid_argument("aqcl_loss: query/key count mismatch");
    }
    const auto sims = similarity_matrix(raw_queries, quantized_keys);
    return infonce_from_similarities(sims, raw_queries.size(), tau);
}

}  // namespace hybridq
