#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hybridq/config.hpp"

namespace hybridq {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        data.assign(n, 0.0);
    }

    std::size_t size() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

// All trainable parameters plus the batch-norm running statistics. Immutable
// during inference; a single writer mutates it during training.
struct ParameterSet {
    EngineConfig config;

    // frontend
    Tensor gate_vectors;  // (N_E, Dt)
    Tensor expert_proj;   // (N_E, D, Dt)
    Tensor token_proj;    // (D, Dt)

    // ghostvlad; row 0 of centroids/assign_weights is the ghost cluster
    Tensor centroids;        // (L+1, D)
    Tensor assign_weights;   // (L+1, D)
    Tensor bn_scale;         // (L+1)
    Tensor bn_shift;         // (L+1)
    Tensor bn_running_mean;  // (L+1), state, not trainable
    Tensor bn_running_var;   // (L+1), state, not trainable

    // quantizer; codebooks[0] is the coarse level, [1..L] the fine levels.
    // Each is (M, K, d); codewords are stored raw and normalized on read.
    std::vector<Tensor> codebooks;
};

// Gradients mirror the trainable tensors of a ParameterSet.
struct Gradients {
    Tensor gate_vectors, expert_proj, token_proj;
    Tensor centroids, assign_weights, bn_scale, bn_shift;
    std::vector<Tensor> codebooks;
};

// Deterministic in (config, seed): codewords and centroids are unit-norm
// Gaussian vectors, projections fan-in-scaled uniform. Throws on an invalid
// config.
ParameterSet init_parameters(const EngineConfig& cfg);

Gradients make_zero_gradients(const ParameterSet& params);
void zero_gradients(Gradients& g);

// Visits trainable tensors in a fixed order (gradient/optimizer state is
// keyed by this order).
void for_each_trainable(ParameterSet& p,
                        const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_trainable(const ParameterSet& p,
                        const std::function<void(const std::string&, const Tensor&)>& fn);
void for_each_trainable(ParameterSet& p, Gradients& g,
                        const std::function<void(const std::string&, Tensor&, Tensor&)>& fn);

// FNV-1a over config geometry and raw codebook bytes; the stale-codebook
// guard for CodeIndex.
std::uint64_t codebook_fingerprint(const ParameterSet& p);

// Checkpoint container: magic, version, config, then named tensors as
// row-major little-endian f32.
void save_checkpoint(const ParameterSet& params, const std::string& path);
ParameterSet load_checkpoint(const std::string& path);

}  // namespace hybridq
