#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>

namespace hybridq {

// Engine configuration. The text file form uses the interface key names
// (D, Dt, M, K, L, N_E, alpha, tau, ...); unknown keys are rejected.
struct EngineConfig {
    std::size_t embed_dim = 512;        // D, shared embedding dimension
    std::size_t text_dim = 768;         // Dt, raw query-token dimension
    std::size_t subspaces = 32;         // M, sub-codebooks per level
    std::size_t codewords = 256;        // K, codewords per sub-codebook (power of two)
    std::size_t clusters = 7;           // L, active (non-ghost) clusters
    std::size_t experts = 7;            // N_E, modality experts on the item view
    double attn_scale = 1.0;            // alpha, quantization attention scale
    double temperature = 0.05;          // tau, contrastive temperature
    double learning_rate = 5e-5;
    std::size_t lr_decay_every_steps = 1000;
    double lr_decay_factor = 0.95;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;

    // Trainer knobs; max_steps/patience 0 disables the cap.
    std::size_t max_epochs = 16;
    std::size_t max_steps = 0;
    std::size_t patience = 0;

    std::size_t subspace_dim() const { return embed_dim / subspaces; }
    std::size_t levels() const { return clusters + 1; }  // coarse + L fine

    // Bits per quantization level and packed byte size of a full code.
    std::size_t bits_per_level() const;
    std::size_t code_bytes() const;

    // Throws std::invalid_argument on any invariant violation.
    void validate() const;
};

// Flat "key = value" text format; '#' starts a comment. Unknown keys are
// errors so hyperparameter typos fail loudly.
EngineConfig load_config_file(const std::string& path);
EngineConfig parse_config_text(std::istream& in, const std::string& origin);
void write_config_file(const EngineConfig& cfg, const std::string& path);

}  // namespace hybridq
