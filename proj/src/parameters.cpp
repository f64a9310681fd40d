#include "hybridq/parameters.hpp"

#include <cmath>
#include <stdexcept>

#include "hybridq/kernels.hpp"
#include "hybridq/rng.hpp"

namespace hybridq {

namespace {

void fill_fanin_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

// Gaussian entries, then each row rescaled to unit norm.
void fill_unit_gaussian_rows(Tensor& t, std::size_t row_dim, Rng& rng) {
    const std::size_t rows = t.size() / row_dim;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = t.ptr() + r * row_dim;
        double ss = 0.0;
        for (std::size_t j = 0; j < row_dim; ++j) {
            row[j] = rng.gaussian();
            ss += row[j] * row[j];
        }
        const double inv = 1.0 / std::sqrt(ss + 1e-300);
        for (std::size_t j = 0; j < row_dim; ++j) row[j] *= inv;
    }
}

}  // namespace

ParameterSet init_parameters(const EngineConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    ParameterSet p;
    p.config = cfg;
    const std::size_t d = cfg.subspace_dim();
    const std::size_t lv = cfg.levels();

    p.gate_vectors = Tensor({cfg.experts, cfg.text_dim});
    fill_fanin_uniform(p.gate_vectors, cfg.text_dim, rng);

    p.expert_proj = Tensor({cfg.experts, cfg.embed_dim, cfg.text_dim});
    fill_fanin_uniform(p.expert_proj, cfg.text_dim, rng);

    p.token_proj = Tensor({cfg.embed_dim, cfg.text_dim});
    fill_fanin_uniform(p.token_proj, cfg.text_dim, rng);

    p.centroids = Tensor({lv, cfg.embed_dim});
    fill_unit_gaussian_rows(p.centroids, cfg.embed_dim, rng);

    p.assign_weights = Tensor({lv, cfg.embed_dim});
    fill_unit_gaussian_rows(p.assign_weights, cfg.embed_dim, rng);

    p.bn_scale = Tensor({lv});
    for (auto& v : p.bn_scale.data) v = 1.0;
    p.bn_shift = Tensor({lv});
    p.bn_running_mean = Tensor({lv});
    p.bn_running_var = Tensor({lv});
    for (auto& v : p.bn_running_var.data) v = 1.0;

    p.codebooks.reserve(lv);
    for (std::size_t l = 0; l < lv; ++l) {
        Tensor cb({cfg.subspaces, cfg.codewords, d});
        fill_unit_gaussian_rows(cb, d, rng);
        p.codebooks.push_back(std::move(cb));
    }
    return p;
}

Gradients make_zero_gradients(const ParameterSet& params) {
    Gradients g;
    g.gate_vectors = Tensor(params.gate_vectors.shape);
    g.expert_proj = Tensor(params.expert_proj.shape);
    g.token_proj = Tensor(params.token_proj.shape);
    g.centroids = Tensor(params.centroids.shape);
    g.assign_weights = Tensor(params.assign_weights.shape);
    g.bn_scale = Tensor(params.bn_scale.shape);
    g.bn_shift = Tensor(params.bn_shift.shape);
    g.codebooks.reserve(params.codebooks.size());
    for (const auto& cb : params.codebooks) g.codebooks.emplace_back(cb.shape);
    return g;
}

void zero_gradients(Gradients& g) {
    auto clear = [](Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); };
    clear(g.gate_vectors);
    clear(g.expert_proj);
    clear(g.token_proj);
    clear(g.centroids);
    clear(g.assign_weights);
    clear(g.bn_scale);
    clear(g.bn_shift);
    for (auto& cb : g.codebooks) clear(cb);
}

namespace {

template <typename P, typename Fn>
void visit_trainable(P& p, const Fn& fn) {
    fn("frontend.gate_vectors", p.gate_vectors);
    fn("frontend.expert_proj", p.expert_proj);
    fn("frontend.token_proj", p.token_proj);
    fn("vlad.centroids", p.centroids);
    fn("vlad.assign_weights", p.assign_weights);
    fn("vlad.bn_scale", p.bn_scale);
    fn("vlad.bn_shift", p.bn_shift);
    for (std::size_t l = 0; l < p.codebooks.size(); ++l) {
        fn("quantizer.codebooks." + std::to_string(l), p.codebooks[l]);
    }
}

}  // namespace

void for_each_trainable(ParameterSet& p,
                        const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_trainable(p, fn);
}

void for_each_trainable(const ParameterSet& p,
                        const std::function<void(const std::string&, const Tensor&)>& fn) {
    visit_trainable(p, fn);
}

void for_each_trainable(
    ParameterSet& p, Gradients& g,
    const std::function<void(const std::string&, Tensor&, Tensor&)>& fn) {
    fn("frontend.gate_vectors", p.gate_vectors, g.gate_vectors);
    fn("frontend.expert_proj", p.expert_proj, g.expert_proj);
    fn("frontend.token_proj", p.token_proj, g.token_proj);
    fn("vlad.centroids", p.centroids, g.centroids);
    fn("vlad.assign_weights", p.assign_weights, g.assign_weights);
    fn("vlad.bn_scale", p.bn_scale, g.bn_scale);
    fn("vlad.bn_shift", p.bn_shift, g.bn_shift);
    for (std::size_t l = 0; l < p.codebooks.size(); ++l) {
        fn("quantizer.codebooks." + std::to_string(l), p.codebooks[l], g.codebooks[l]);
    }
}

std::uint64_t codebook_fingerprint(const ParameterSet& p) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* bytes, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    const std::uint64_t geom[4] = {p.config.embed_dim, p.config.subspaces,
                                   p.config.codewords, p.config.clusters};
    mix(geom, sizeof(geom));
    for (const auto& cb : p.codebooks) {
        mix(cb.data.data(), cb.data.size() * sizeof(double));
    }
    return h;
}

}  // namespace hybridq
