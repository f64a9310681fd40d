#pragma once

#include <span>
#include <vector>

#include "hybridq/parameters.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

// Intermediates of coarse_query_embed kept for the backward pass.
struct CoarseQueryTrace {
    std::vector<double> gate_weights;  // N_E, softmax output
    VecArray proj_raw;                 // N_E x D, expert projections before norm
    VecArray proj_unit;                // N_E x D, after l2 norm
    std::vector<double> proj_norms;    // N_E, eps-guarded norms
};

// Self-gated projection of the CLS embedding: sum_e w_e(cls) * psi_e(cls)
// with each psi_e output l2-normalized. The sum itself is not re-normalized.
std::vector<double> coarse_query_embed(std::span<const double> cls,
                                       const ParameterSet& params,
                                       CoarseQueryTrace* trace = nullptr);

void coarse_query_backward(std::span<const double> cls, const ParameterSet& params,
                           const CoarseQueryTrace& trace,
                           std::span<const double> d_out, Gradients& grads);

// Mean of the AGG tokens, l2-normalized. Throws std::invalid_argument when
// the mean is degenerate (norm below 1e-9).
std::vector<double> coarse_item_embed(const VecArray& agg_tokens);

// Maps each Dt-dim query token into the shared D-dim space. Item tokens
// bypass this and feed GhostVLAD directly.
VecArray project_query_tokens(const VecArray& tokens, const ParameterSet& params);

// Accumulates d_token_proj from upstream gradients of the projected tokens.
void project_query_tokens_backward(const VecArray& tokens, const VecArray& d_projected,
                                   Gradients& grads);

// Softmax gate weights on their own; exposed for tests and diagnostics.
std::vector<double> gate_weights(std::span<const double> cls, const ParameterSet& params);

}  // namespace hybridq
