#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hybridq/config.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

// Desk-scale stand-in for paired cross-view data: both views are noisy
// linear projections of a shared latent vector, so cross-view alignment is
// learnable by construction.
struct SyntheticSpec {
    std::size_t pairs = 512;
    std::size_t latent_dim = 16;
    double noise = 0.1;
    std::size_t query_tokens_min = 4, query_tokens_max = 8;
    std::size_t item_tokens_min = 4, item_tokens_max = 8;
    std::size_t text_dim = 24;   // Dt
    std::size_t embed_dim = 32;  // D
    std::size_t experts = 2;     // N_E
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

struct SyntheticPairs {
    std::vector<TokenBag> queries;
    std::vector<TokenBag> items;
};

// Pure function of the given SyntheticSpec, including its seed.
SyntheticPairs generate_synthetic_pairs(const SyntheticSpec& spec);

}  // namespace hybridq
