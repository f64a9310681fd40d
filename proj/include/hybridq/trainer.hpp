#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hybridq/frontend.hpp"
#include "hybridq/ghostvlad.hpp"
#include "hybridq/parameters.hpp"
#include "hybridq/quantizer.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

// Everything the backward pass needs from one batched forward evaluation.
struct BatchTrace {
    std::size_t batch = 0;

    // query view
    std::vector<CoarseQueryTrace> q_coarse_traces;
    VecArray q_tokens_proj;
    std::vector<std::size_t> q_offsets;
    VladTrace q_vlad;

    // item view
    std::vector<std::size_t> v_offsets;
    VladTrace v_vlad;

    // raw level embeddings, [0] coarse, [1..L] fine; each N_B x D
    std::vector<VecArray> q_levels, v_levels;

    // soft quantization per level per instance, and reconstructions
    std::vector<std::vector<SoftQuantTrace>> q_soft, v_soft;
    std::vector<VecArray> q_recon, v_recon;

    // similarity matrices per level, both directions
    std::vector<std::vector<double>> sims_t2v, sims_v2t;
};

struct LossBreakdown {
    double total = 0.0;
    std::vector<double> per_level;  // [0] coarse, [1..L] fine, direction-averaged
};

// Hybrid contrastive loss over a batch of matched pairs. Train mode uses
// batch statistics in the assignment batch norm; no running-stat update
// happens here, so the call is a pure function of (batch, params).
LossBreakdown hybrid_loss(const std::vector<TokenBag>& queries,
                          const std::vector<TokenBag>& items,
                          const ParameterSet& params, Mode mode,
                          BatchTrace* trace = nullptr);

// Full analytic backward for a train-mode trace.
void hybrid_backward(const std::vector<TokenBag>& queries,
                     const std::vector<TokenBag>& items, const ParameterSet& params,
                     const BatchTrace& trace, Gradients& grads);

struct AdamState {
    std::vector<Tensor> m, v;  // keyed by for_each_trainable order
};

AdamState make_adam_state(const ParameterSet& params);

// Step-decayed learning rate: lr * factor^(step / decay_every).
double scheduled_lr(const EngineConfig& cfg, std::size_t step);

struct StepReport {
    LossBreakdown loss;
    double lr = 0.0;
};

// One optimization step: forward, backward, Adam update, batch-norm running
// stat commit. `step` is the zero-based global step index. Throws
// std::runtime_error naming the offending level if the loss is non-finite.
// Mutates params and adam; one writer at a time per model instance.
StepReport train_step(const std::vector<TokenBag>& queries,
                      const std::vector<TokenBag>& items, ParameterSet& params,
                      AdamState& adam, std::size_t step);

struct TrainResult {
    ParameterSet params;
    std::size_t steps_run = 0;
    double best_val_r1 = -1.0;  // negative when no validation is supplied
};

// Seeded-shuffle epoch loop. Logs `step <TAB> lr <TAB> total <TAB> per-level...`
// per step plus `# epoch ...` summary lines; when validation pairs are given
// the summary carries text->item R@1 via hard-code search, the best
// parameters are kept, and `patience` epochs without improvement stop early.
TrainResult train_loop(const std::vector<TokenBag>& train_queries,
                       const std::vector<TokenBag>& train_items,
                       const std::vector<TokenBag>* val_queries,
                       const std::vector<TokenBag>* val_items,
                       const EngineConfig& cfg, std::ostream& log);

}  // namespace hybridq
