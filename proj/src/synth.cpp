#include "hybridq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hybridq/rng.hpp"

namespace hybridq {

void SyntheticSpec::validate() const {
    if (pairs == 0) throw std::invalid_argument("synth: pairs must be positive");
    if (latent_dim == 0) throw std::invalid_argument("synth: latent_dim must be positive");
    if (latent_dim > std::min(text_dim, embed_dim)) {
        throw std::invalid_argument("synth: latent_dim must be <= min(Dt, D)");
    }
    if (noise < 0.0) throw std::invalid_argument("synth: noise must be non-negative");
    if (query_tokens_min == 0 || query_tokens_min > query_tokens_max ||
        item_tokens_min == 0 || item_tokens_min > item_tokens_max) {
        throw std::invalid_argument("synth: bad token count range");
    }
    if (experts == 0) throw std::invalid_argument("synth: experts must be positive");
}

namespace {

// dst = A z + noise * eps, with A row-major (rows x latent)
void project(const std::vector<double>& a, std::size_t rows, std::size_t latent,
             const std::vector<double>& z, double noise, Rng& rng, double* dst) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < latent; ++c) acc += a[r * latent + c] * z[c];
        dst[r] = acc + noise * rng.gaussian();
    }
}

std::vector<double> random_projection(std::size_t rows, std::size_t latent, Rng& rng) {
    std::vector<double> a(rows * latent);
    const double scale = 1.0 / std::sqrt(static_cast<double>(latent));
    for (auto& v : a) v = scale * rng.gaussian();
    return a;
}

}  // namespace

SyntheticPairs generate_synthetic_pairs(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    // Fixed projections shared by every pair.
    const auto a_cls = random_projection(spec.text_dim, spec.latent_dim, rng);
    const auto a_qtok = random_projection(spec.text_dim, spec.latent_dim, rng);
    const auto a_vtok = random_projection(spec.embed_dim, spec.latent_dim, rng);
    std::vector<std::vector<double>> a_agg(spec.experts);
    for (auto& a : a_agg) a = random_projection(spec.embed_dim, spec.latent_dim, rng);

    SyntheticPairs out;
    out.queries.reserve(spec.pairs);
    out.items.reserve(spec.pairs);

    std::vector<double> z(spec.latent_dim);
    for (std::size_t p = 0; p < spec.pairs; ++p) {
        for (auto& v : z) v = rng.gaussian();

        TokenBag q;
        q.view = View::Query;
        q.condensed = VecArray(1, spec.text_dim);
        project(a_cls, spec.text_dim, spec.latent_dim, z, spec.noise, rng,
                q.condensed.row(0));
        const std::size_t nq =
            spec.query_tokens_min +
            static_cast<std::size_t>(rng.next_u64() %
                                     (spec.query_tokens_max - spec.query_tokens_min + 1));
        q.tokens = VecArray(nq, spec.text_dim);
        for (std::size_t t = 0; t < nq; ++t) {
            project(a_qtok, spec.text_dim, spec.latent_dim, z, spec.noise, rng,
                    q.tokens.row(t));
        }

        TokenBag v;
        v.view = View::Item;
        v.condensed = VecArray(spec.experts, spec.embed_dim);
        for (std::size_t e = 0; e < spec.experts; ++e) {
            project(a_agg[e], spec.embed_dim, spec.latent_dim, z, spec.noise, rng,
                    v.condensed.row(e));
        }
        const std::size_t nv =
            spec.item_tokens_min +
            static_cast<std::size_t>(rng.next_u64() %
                                     (spec.item_tokens_max - spec.item_tokens_min + 1));
        v.tokens = VecArray(nv, spec.embed_dim);
        for (std::size_t t = 0; t < nv; ++t) {
            project(a_vtok, spec.embed_dim, spec.latent_dim, z, spec.noise, rng,
                    v.tokens.row(t));
        }

        out.queries.push_back(std::move(q));
        out.items.push_back(std::move(v));
    }
    return out;
}

}  // namespace hybridq
