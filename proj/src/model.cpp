#include "hybridq/model.hpp"

#include <array>

#include "hybridq/frontend.hpp"
#include "hybridq/ghostvlad.hpp"

namespace hybridq {

InstanceEmbeddings embed_instance(const TokenBag& bag, const ParameterSet& params) {
    validate_bag(bag, params.config);

    InstanceEmbeddings out;
    const std::array<std::size_t, 2> offsets{0, bag.tokens.size()};

    if (bag.view == View::Query) {
        out.coarse = coarse_query_embed(bag.condensed.row_span(0), params);
        const VecArray projected = project_query_tokens(bag.tokens, params);
        out.fine = vlad_forward(projected, offsets, params, Mode::Infer);
    } else {
        out.coarse = coarse_item_embed(bag.condensed);
        out.fine = vlad_forward(bag.tokens, offsets, params, Mode::Infer);
    }
    return out;
}

}  // namespace hybridq
