#include "hybridq/types.hpp"

#include <cmath>
#include <stdexcept>

namespace hybridq {

void validate_bag(const TokenBag& bag, const EngineConfig& cfg) {
    const bool is_query = bag.view == View::Query;
    const std::size_t dim = is_query ? cfg.text_dim : cfg.embed_dim;
    const std::size_t condensed = is_query ? 1 : cfg.experts;

    if (bag.tokens.size() == 0) {
        throw std::invalid_argument("token bag: tokens must be non-empty");
    }
    if (bag.tokens.dim != dim) {
        throw std::invalid_argument("token bag: token dimension mismatch");
    }
    if (bag.condensed.dim != dim || bag.condensed.size() != condensed) {
        throw std::invalid_argument("token bag: condensed token shape mismatch");
    }
    for (double v : bag.tokens.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("token bag: non-finite token value");
        }
    }
    for (double v : bag.condensed.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("token bag: non-finite condensed value");
        }
    }
}

}  // namespace hybridq
