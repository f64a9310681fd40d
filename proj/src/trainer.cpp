#include "hybridq/trainer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "hybridq/index.hpp"
#include "hybridq/kernels.hpp"
#include "hybridq/loss.hpp"
#include "hybridq/model.hpp"
#include "hybridq/rng.hpp"

namespace hybridq {

namespace {

// Flattens the token lists of a view into one array with per-bag offsets.
void flatten_tokens(const std::vector<TokenBag>& bags, std::size_t dim,
                    VecArray& tokens, std::vector<std::size_t>& offsets) {
    tokens = VecArray(dim);
    offsets.assign(1, 0);
    for (const auto& bag : bags) {
        tokens.data.insert(tokens.data.end(), bag.tokens.data.begin(),
                           bag.tokens.data.end());
        offsets.push_back(offsets.back() + bag.tokens.size());
    }
}

// Raw level embeddings -> soft reconstructions for every instance at one level.
void quantize_level(const VecArray& level_embeds, const Tensor& codebook, double alpha,
                    std::vector<SoftQuantTrace>& traces, VecArray& recon) {
    const std::size_t n = level_embeds.size();
    traces.resize(n);
    recon = VecArray(n, level_embeds.dim);
    for (std::size_t i = 0; i < n; ++i) {
        soft_quantize(level_embeds.row_span(i), codebook, alpha, traces[i]);
        for (std::size_t k = 0; k < level_embeds.dim; ++k) {
            recon.row(i)[k] = traces[i].reconstruction[k];
        }
    }
}

}  // namespace

LossBreakdown hybrid_loss(const std::vector<TokenBag>& queries,
                          const std::vector<TokenBag>& items,
                          const ParameterSet& params, Mode mode, BatchTrace* trace) {
    const auto& cfg = params.config;
    if (queries.empty() || queries.size() != items.size()) {
        throw std::invalid_argument("hybrid_loss: batch must be non-empty matched pairs");
    }
    for (const auto& b : queries) {
        if (b.view != View::Query) throw std::invalid_argument("hybrid_loss: view mismatch");
        validate_bag(b, cfg);
    }
    for (const auto& b : items) {
        if (b.view != View::Item) throw std::invalid_argument("hybrid_loss: view mismatch");
        validate_bag(b, cfg);
    }

    const std::size_t n = queries.size();
    const std::size_t D = cfg.embed_dim;
    const std::size_t L = cfg.clusters;

    BatchTrace local;
    BatchTrace& t = trace != nullptr ? *trace : local;
    t = BatchTrace{};
    t.batch = n;

    // ---- query view ----
    t.q_coarse_traces.resize(n);
    VecArray q_coarse(n, D);
    {
        t.q_offsets.assign(1, 0);
        t.q_tokens_proj = VecArray(D);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = coarse_query_embed(queries[i].condensed.row_span(0), params,
                                        &t.q_coarse_traces[i]);
            for (std::size_t k = 0; k < D; ++k) q_coarse.row(i)[k] = c[k];
            const VecArray projected = project_query_tokens(queries[i].tokens, params);
            t.q_tokens_proj.data.insert(t.q_tokens_proj.data.end(),
                                        projected.data.begin(), projected.data.end());
            t.q_offsets.push_back(t.q_offsets.back() + queries[i].tokens.size());
        }
    }
    const VecArray q_fine =
        vlad_forward(t.q_tokens_proj, t.q_offsets, params, mode, &t.q_vlad);

    // ---- item view ----
    VecArray v_coarse(n, D);
    VecArray v_tokens(D);
    flatten_tokens(items, D, v_tokens, t.v_offsets);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = coarse_item_embed(items[i].condensed);
        for (std::size_t k = 0; k < D; ++k) v_coarse.row(i)[k] = c[k];
    }
    const VecArray v_fine = vlad_forward(v_tokens, t.v_offsets, params, mode, &t.v_vlad);

    // ---- per-level raw embeddings ----
    t.q_levels.assign(cfg.levels(), VecArray(n, D));
    t.v_levels.assign(cfg.levels(), VecArray(n, D));
    t.q_levels[0] = std::move(q_coarse);
    t.v_levels[0] = std::move(v_coarse);
    for (std::size_t l = 1; l <= L; ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = i * L + (l - 1);
            for (std::size_t k = 0; k < D; ++k) {
                t.q_levels[l].row(i)[k] = q_fine.row(row)[k];
                t.v_levels[l].row(i)[k] = v_fine.row(row)[k];
            }
        }
    }

    // ---- soft quantization and similarities ----
    t.q_soft.resize(cfg.levels());
    t.v_soft.resize(cfg.levels());
    t.q_recon.resize(cfg.levels());
    t.v_recon.resize(cfg.levels());
    t.sims_t2v.resize(cfg.levels());
    t.sims_v2t.resize(cfg.levels());

    LossBreakdown out;
    out.per_level.resize(cfg.levels());
    for (std::size_t l = 0; l < cfg.levels(); ++l) {
        quantize_level(t.q_levels[l], params.codebooks[l], cfg.attn_scale, t.q_soft[l],
                       t.q_recon[l]);
        quantize_level(t.v_levels[l], params.codebooks[l], cfg.attn_scale, t.v_soft[l],
                       t.v_recon[l]);
        t.sims_t2v[l] = similarity_matrix(t.q_levels[l], t.v_recon[l]);
        t.sims_v2t[l] = similarity_matrix(t.v_levels[l], t.q_recon[l]);
        const double lt2v = infonce_from_similarities(t.sims_t2v[l], n, cfg.temperature);
        const double lv2t = infonce_from_similarities(t.sims_v2t[l], n, cfg.temperature);
        out.per_level[l] = 0.5 * (lt2v + lv2t);
    }

    out.total = out.per_level[0];
    if (L > 0) {
        double fine_sum = 0.0;
        for (std::size_t l = 1; l <= L; ++l) fine_sum += out.per_level[l];
        out.total += fine_sum / static_cast<double>(L);
    }
    return out;
}

void hybrid_backward(const std::vector<TokenBag>& queries,
                     const std::vector<TokenBag>& items, const ParameterSet& params,
                     const BatchTrace& trace, Gradients& grads) {
    const auto& cfg = params.config;
    const std::size_t n = trace.batch;
    const std::size_t D = cfg.embed_dim;
    const std::size_t L = cfg.clusters;
    const double tau = cfg.temperature;

    // gradient wrt every raw level embedding, both views
    std::vector<VecArray> d_q_levels(cfg.levels(), VecArray(n, D));
    std::vector<VecArray> d_v_levels(cfg.levels(), VecArray(n, D));

    for (std::size_t l = 0; l < cfg.levels(); ++l) {
        // coarse contributes once, each fine level 1/L; each direction
        // carries 1/2 from the direction average
        const double w = 0.5 * (l == 0 ? 1.0 : 1.0 / static_cast<double>(L));

        VecArray d_q_recon(n, D), d_v_recon(n, D);

        // direction query -> item: queries raw, keys quantized items
        {
            const auto dS = infonce_similarity_grad(trace.sims_t2v[l], n, tau, w);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = dS[i * n + j];
                    if (g == 0.0) continue;
                    kernels::axpy(g, trace.v_recon[l].row(j), d_q_levels[l].row(i), D);
                    kernels::axpy(g, trace.q_levels[l].row(i), d_v_recon.row(j), D);
                }
            }
        }
        // direction item -> query: items raw, keys quantized queries
        {
            const auto dS = infonce_similarity_grad(trace.sims_v2t[l], n, tau, w);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = dS[i * n + j];
                    if (g == 0.0) continue;
                    kernels::axpy(g, trace.q_recon[l].row(j), d_v_levels[l].row(i), D);
                    kernels::axpy(g, trace.v_levels[l].row(i), d_q_recon.row(j), D);
                }
            }
        }

        // through the shared quantization module of this level (both views)
        for (std::size_t i = 0; i < n; ++i) {
            soft_quantize_backward(trace.q_levels[l].row_span(i), params.codebooks[l],
                                   cfg.attn_scale, trace.q_soft[l][i],
                                   d_q_recon.row_span(i), d_q_levels[l].row_span(i),
                                   grads.codebooks[l]);
            soft_quantize_backward(trace.v_levels[l].row_span(i), params.codebooks[l],
                                   cfg.attn_scale, trace.v_soft[l][i],
                                   d_v_recon.row_span(i), d_v_levels[l].row_span(i),
                                   grads.codebooks[l]);
        }
    }

    // ---- query coarse path ----
    for (std::size_t i = 0; i < n; ++i) {
        coarse_query_backward(queries[i].condensed.row_span(0), params,
                              trace.q_coarse_traces[i], d_q_levels[0].row_span(i), grads);
    }
    // item coarse path has no trainable parameters

    // ---- fine paths through GhostVLAD ----
    VecArray d_q_fine(n * L, D), d_v_fine(n * L, D);
    for (std::size_t l = 1; l <= L; ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = i * L + (l - 1);
            for (std::size_t k = 0; k < D; ++k) {
                d_q_fine.row(row)[k] = d_q_levels[l].row(i)[k];
                d_v_fine.row(row)[k] = d_v_levels[l].row(i)[k];
            }
        }
    }

    VecArray d_q_tokens(trace.q_tokens_proj.size(), D);
    vlad_backward(trace.q_tokens_proj, trace.q_offsets, params, trace.q_vlad, d_q_fine,
                  grads, d_q_tokens);

    VecArray v_tokens(D);
    std::vector<std::size_t> v_offsets;
    flatten_tokens(items, D, v_tokens, v_offsets);
    VecArray d_v_tokens(v_tokens.size(), D);  // ends at the inputs
    vlad_backward(v_tokens, trace.v_offsets, params, trace.v_vlad, d_v_fine, grads,
                  d_v_tokens);

    // projected query tokens -> projection matrix
    std::size_t tok = 0;
    for (const auto& bag : queries) {
        VecArray d_proj(bag.tokens.size(), D);
        for (std::size_t j = 0; j < bag.tokens.size(); ++j) {
            for (std::size_t k = 0; k < D; ++k) {
                d_proj.row(j)[k] = d_q_tokens.row(tok + j)[k];
            }
        }
        project_query_tokens_backward(bag.tokens, d_proj, grads);
        tok += bag.tokens.size();
    }
}

AdamState make_adam_state(const ParameterSet& params) {
    AdamState s;
    for_each_trainable(params, [&](const std::string&, const Tensor& t) {
        s.m.emplace_back(t.shape);
        s.v.emplace_back(t.shape);
    });
    return s;
}

double scheduled_lr(const EngineConfig& cfg, std::size_t step) {
    const auto decays = step / cfg.lr_decay_every_steps;
    return cfg.learning_rate * std::pow(cfg.lr_decay_factor, static_cast<double>(decays));
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(ParameterSet& params, Gradients& grads, AdamState& adam, double lr,
                 std::size_t step) {
    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
    std::size_t idx = 0;
    for_each_trainable(params, grads,
                       [&](const std::string&, Tensor& p, Tensor& g) {
                           Tensor& m = adam.m[idx];
                           Tensor& v = adam.v[idx];
                           ++idx;
                           for (std::size_t i = 0; i < p.size(); ++i) {
                               const double gi = g.data[i];
                               m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * gi;
                               v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * gi * gi;
                               const double mhat = m.data[i] / bc1;
                               const double vhat = v.data[i] / bc2;
                               p.data[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
                           }
                       });
}

std::string level_name(std::size_t l) {
    return l == 0 ? std::string("coarse") : "fine(" + std::to_string(l) + ")";
}

}  // namespace

StepReport train_step(const std::vector<TokenBag>& queries,
                      const std::vector<TokenBag>& items, ParameterSet& params,
                      AdamState& adam, std::size_t step) {
    BatchTrace trace;
    StepReport report;
    report.loss = hybrid_loss(queries, items, params, Mode::Train, &trace);
    for (std::size_t l = 0; l < report.loss.per_level.size(); ++l) {
        if (!std::isfinite(report.loss.per_level[l])) {
            throw std::runtime_error("train_step: non-finite loss at level " +
                                     level_name(l));
        }
    }

    Gradients grads = make_zero_gradients(params);
    hybrid_backward(queries, items, params, trace, grads);

    report.lr = scheduled_lr(params.config, step);
    adam_update(params, grads, adam, report.lr, step);

    // commit the batch statistics seen this step, query view then item view
    vlad_update_running_stats(params, trace.q_vlad.stats,
                              trace.q_offsets.back());
    vlad_update_running_stats(params, trace.v_vlad.stats,
                              trace.v_offsets.back());
    return report;
}

namespace {

double validation_r1(const std::vector<TokenBag>& val_queries,
                     const std::vector<TokenBag>& val_items,
                     const ParameterSet& params) {
    std::vector<std::uint64_t> ids(val_items.size());
    std::iota(ids.begin(), ids.end(), 0);
    const CodeIndex index = encode_database(val_items, ids, params);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < val_queries.size(); ++i) {
        const auto top = hybrid_search(val_queries[i], index, params, 1);
        if (!top.empty() && top[0].id == i) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(val_queries.size());
}

}  // namespace

TrainResult train_loop(const std::vector<TokenBag>& train_queries,
                       const std::vector<TokenBag>& train_items,
                       const std::vector<TokenBag>* val_queries,
                       const std::vector<TokenBag>* val_items, const EngineConfig& cfg,
                       std::ostream& log) {
    cfg.validate();
    if (train_queries.empty() || train_queries.size() != train_items.size()) {
        throw std::invalid_argument("train_loop: empty or mismatched training set");
    }
    const bool has_val = val_queries != nullptr && val_items != nullptr &&
                         !val_queries->empty();
    if (has_val && val_queries->size() != val_items->size()) {
        throw std::invalid_argument("train_loop: mismatched validation set");
    }

    TrainResult result;
    result.params = init_parameters(cfg);
    AdamState adam = make_adam_state(result.params);
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    ParameterSet best = result.params;
    double best_r1 = -1.0;
    std::size_t epochs_since_improvement = 0;
    std::size_t step = 0;
    bool stop = false;

    const std::size_t n = train_queries.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0;

        for (std::size_t start = 0; start < n && !stop; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            std::vector<TokenBag> bq, bv;
            bq.reserve(end - start);
            bv.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                bq.push_back(train_queries[order[i]]);
                bv.push_back(train_items[order[i]]);
            }
            const StepReport rep = train_step(bq, bv, result.params, adam, step);
            ++step;
            ++epoch_steps;
            epoch_loss += rep.loss.total;

            log << step << '\t' << rep.lr << '\t' << rep.loss.total;
            for (double l : rep.loss.per_level) log << '\t' << l;
            log << '\n';

            if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
        }

        const double mean_loss =
            epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
        if (has_val) {
            const double r1 = validation_r1(*val_queries, *val_items, result.params);
            log << "# epoch " << epoch << " mean_loss " << mean_loss << " val_r1 " << r1
                << '\n';
            if (r1 > best_r1) {
                best_r1 = r1;
                best = result.params;
                epochs_since_improvement = 0;
            } else {
                ++epochs_since_improvement;
                if (cfg.patience > 0 && epochs_since_improvement >= cfg.patience) {
                    log << "# early stop at epoch " << epoch << '\n';
                    stop = true;
                }
            }
        } else {
            log << "# epoch " << epoch << " mean_loss " << mean_loss << '\n';
        }
    }

    if (has_val && best_r1 >= 0.0) {
        result.params = std::move(best);
        result.best_val_r1 = best_r1;
    }
    result.steps_run = step;
    return result;
}

}  // namespace hybridq
