#pragma once

#include <span>
#include <vector>

#include "hybridq/parameters.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

enum class Mode { Train, Infer };

// Batch statistics of the assignment logits, one entry per cluster channel.
// Train mode computes them from the tokens of the current call; infer mode
// reads the running statistics.
struct BnStats {
    std::vector<double> mean;     // L+1
    std::vector<double> inv_std;  // L+1, 1/sqrt(var + eps)
    std::vector<double> var;      // L+1, biased batch variance (train mode)
};

struct VladTrace {
    std::vector<double> logits;  // N x (L+1), raw w_l . x
    std::vector<double> xhat;    // N x (L+1), normalized pre scale/shift
    BnStats stats;
    std::vector<double> assign;     // N x (L+1), row-stochastic
    std::vector<double> residuals;  // n_inst x L x D, pre-normalization
    std::vector<double> res_norms;  // n_inst x L
};

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kResidualEps = 1e-12;

// Soft assignment of D-dim tokens to L+1 clusters (column 0 is the ghost):
// softmax over batch-normalized per-cluster logits. Rows sum to 1.
// stats_out, when given, receives the statistics actually used.
std::vector<double> vlad_assign(const VecArray& tokens, const ParameterSet& params,
                                Mode mode, BnStats* stats_out = nullptr,
                                std::vector<double>* logits_out = nullptr,
                                std::vector<double>* xhat_out = nullptr);

// Per-instance residual aggregation over the active clusters, l2-normalized
// per level; a level with residual norm below kResidualEps yields the zero
// vector. bag_offsets delimits instances inside the flat token array
// (offsets.size() == n_inst + 1).
VecArray vlad_aggregate(const VecArray& tokens, std::span<const std::size_t> bag_offsets,
                        const std::vector<double>& assignments,
                        const ParameterSet& params,
                        std::vector<double>* residuals_out = nullptr,
                        std::vector<double>* res_norms_out = nullptr);

// assign + aggregate with trace capture; fine_out gets n_inst*L rows of D.
VecArray vlad_forward(const VecArray& tokens, std::span<const std::size_t> bag_offsets,
                      const ParameterSet& params, Mode mode, VladTrace* trace = nullptr);

// Backward through aggregate, softmax, batch norm (train-mode statistics)
// and the logit projection. d_fine is n_inst*L rows of D; d_tokens receives
// the gradient wrt the input tokens (accumulated).
void vlad_backward(const VecArray& tokens, std::span<const std::size_t> bag_offsets,
                   const ParameterSet& params, const VladTrace& trace,
                   const VecArray& d_fine, Gradients& grads, VecArray& d_tokens);

// Folds a train-mode batch statistic into the running estimates
// (momentum kBnMomentum, unbiased variance when the batch has > 1 token).
void vlad_update_running_stats(ParameterSet& params, const BnStats& stats,
                               std::size_t token_count);

}  // namespace hybridq
