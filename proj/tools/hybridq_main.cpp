#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>

#include "hybridq/config.hpp"
#include "hybridq/feature_file.hpp"
#include "hybridq/index.hpp"
#include "hybridq/kernels.hpp"
#include "hybridq/metrics.hpp"
#include "hybridq/parameters.hpp"
#include "hybridq/synth.hpp"
#include "hybridq/trainer.hpp"

namespace {

using namespace hybridq;

EngineConfig load_cfg(const std::string& config_path, std::int64_t seed_override) {
    EngineConfig cfg =
        config_path.empty() ? EngineConfig{} : load_config_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.validate();
    return cfg;
}

std::vector<TokenBag> load_view(const std::string& path, View expected) {
    auto bags = read_feature_file(path);
    if (!bags.empty() && bags[0].view != expected) {
        throw std::runtime_error("'" + path + "' holds the wrong view for this role");
    }
    return bags;
}

int cmd_train(const std::string& config_path, std::int64_t seed,
              const std::string& queries_path, const std::string& items_path,
              const std::string& val_queries_path, const std::string& val_items_path,
              const std::string& out_ckpt, const std::string& log_path) {
    const EngineConfig cfg = load_cfg(config_path, seed);
    const auto queries = load_view(queries_path, View::Query);
    const auto items = load_view(items_path, View::Item);

    std::vector<TokenBag> val_q, val_v;
    if (!val_queries_path.empty()) {
        val_q = load_view(val_queries_path, View::Query);
        val_v = load_view(val_items_path, View::Item);
    }

    std::ofstream log(log_path.empty() ? out_ckpt + ".log" : log_path);
    if (!log) throw std::runtime_error("cannot open training log for writing");

    const TrainResult result =
        train_loop(queries, items, val_q.empty() ? nullptr : &val_q,
                   val_v.empty() ? nullptr : &val_v, cfg, log);
    save_checkpoint(result.params, out_ckpt);
    std::cout << "trained " << result.steps_run << " steps";
    if (result.best_val_r1 >= 0.0) std::cout << ", best val R@1 " << result.best_val_r1;
    std::cout << ", checkpoint written to " << out_ckpt << "\n";
    return 0;
}

int cmd_encode(const std::string& ckpt, const std::string& items_path,
               const std::string& out_codes, unsigned threads) {
    const ParameterSet params = load_checkpoint(ckpt);
    const auto items = load_view(items_path, View::Item);
    std::vector<std::uint64_t> ids(items.size());
    std::iota(ids.begin(), ids.end(), 0);
    const CodeIndex index = encode_database(items, ids, params, threads);
    save_code_file(index, out_codes);
    std::cout << "encoded " << index.size() << " items ("
              << packed_code_bytes(index.subspaces, index.codewords, index.clusters)
              << " bytes/item) to " << out_codes << "\n";
    return 0;
}

int cmd_search(const std::string& ckpt, const std::string& codes_path,
               const std::string& queries_path, std::size_t k, unsigned threads) {
    const ParameterSet params = load_checkpoint(ckpt);
    const CodeIndex index = load_code_file(codes_path);
    if (index.fingerprint != codebook_fingerprint(params)) {
        throw std::runtime_error("code file does not match the checkpoint codebooks");
    }
    const auto queries = load_view(queries_path, View::Query);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto hits = hybrid_search(queries[qi], index, params, k, threads);
        std::cout << "# query " << qi << '\n';
        for (std::size_t r = 0; r < hits.size(); ++r) {
            std::cout << (r + 1) << '\t' << hits[r].id << '\t' << hits[r].score << '\n';
        }
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& codes_path,
             const std::string& queries_path, const std::string& items_path,
             unsigned threads) {
    const ParameterSet params = load_checkpoint(ckpt);
    const auto queries = load_view(queries_path, View::Query);
    const auto items = load_view(items_path, View::Item);
    if (queries.size() != items.size()) {
        throw std::runtime_error("eval expects 1:1 paired query/item files");
    }

    CodeIndex item_index;
    if (!codes_path.empty()) {
        item_index = load_code_file(codes_path);
        if (item_index.fingerprint != codebook_fingerprint(params)) {
            throw std::runtime_error("code file does not match the checkpoint codebooks");
        }
        if (item_index.size() != items.size()) {
            throw std::runtime_error("code file size does not match the item file");
        }
    } else {
        std::vector<std::uint64_t> ids(items.size());
        std::iota(ids.begin(), ids.end(), 0);
        item_index = encode_database(items, ids, params, threads);
    }

    const std::size_t bytes =
        packed_code_bytes(item_index.subspaces, item_index.codewords, item_index.clusters);

    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    const auto t2v_ranks = ground_truth_ranks(queries, item_index, params, threads);
    const double t2v_seconds =
        std::chrono::duration<double>(clock::now() - t0).count() /
        static_cast<double>(queries.size());
    const auto t2v = make_report("query_to_item", t2v_ranks, t2v_seconds, bytes);
    print_report_table(t2v, std::cout);
    print_report_keyvalue(t2v, std::cout);

    // Reverse direction: items act as raw queries against quantized queries.
    std::vector<std::uint64_t> qids(queries.size());
    std::iota(qids.begin(), qids.end(), 0);
    const CodeIndex query_index = encode_database(queries, qids, params, threads);
    t0 = clock::now();
    const auto v2t_ranks = ground_truth_ranks(items, query_index, params, threads);
    const double v2t_seconds =
        std::chrono::duration<double>(clock::now() - t0).count() /
        static_cast<double>(items.size());
    const auto v2t = make_report("item_to_query", v2t_ranks, v2t_seconds, bytes);
    print_report_table(v2t, std::cout);
    print_report_keyvalue(v2t, std::cout);
    return 0;
}

int cmd_bench(const std::string& ckpt, const std::string& codes_path,
              const std::string& queries_path, std::size_t reps, std::size_t dup_factor,
              std::size_t k, unsigned threads) {
    const ParameterSet params = load_checkpoint(ckpt);
    CodeIndex index = load_code_file(codes_path);
    if (index.fingerprint != codebook_fingerprint(params)) {
        throw std::runtime_error("code file does not match the checkpoint codebooks");
    }
    const auto queries = load_view(queries_path, View::Query);

    if (dup_factor > 1) {
        const std::size_t n = index.size();
        const std::size_t per_item = index.levels() * index.subspaces;
        index.ids.reserve(n * dup_factor);
        index.codes.reserve(n * dup_factor * per_item);
        for (std::size_t c = 1; c < dup_factor; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                index.ids.push_back(index.ids[i] + c * n);
            }
            index.codes.insert(index.codes.end(), index.codes.begin(),
                               index.codes.begin() + static_cast<std::ptrdiff_t>(n * per_item));
        }
        index.rebuild_scan_layout();
    }

    const BenchReport report = bench_query_time(index, queries, params, reps, k, threads);
    print_bench_report(report, std::cout);
    return 0;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_queries,
              const std::string& out_items) {
    const SyntheticPairs pairs = generate_synthetic_pairs(spec);
    write_feature_file(pairs.queries, out_queries);
    write_feature_file(pairs.items, out_items);
    std::cout << "wrote " << spec.pairs << " pairs to " << out_queries << " and "
              << out_items << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid-grained quantized retrieval engine"};
    app.require_subcommand(1);

    std::string config_path, queries_path, items_path, val_queries_path, val_items_path;
    std::string ckpt_path, codes_path, log_path, out_path, out_queries, out_items;
    std::int64_t seed = -1;
    unsigned threads = 1;
    std::size_t k = 10, reps = 5, dup_factor = 1;

    auto* train = app.add_subcommand("train", "train codebooks on paired features");
    train->add_option("--config", config_path, "engine config file");
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--queries", queries_path, "query feature file")->required();
    train->add_option("--items", items_path, "item feature file")->required();
    train->add_option("--val-queries", val_queries_path, "validation query features");
    train->add_option("--val-items", val_items_path, "validation item features");
    train->add_option("--out", out_path, "output checkpoint")->required();
    train->add_option("--log", log_path, "training log path (default <out>.log)");

    auto* encode = app.add_subcommand("encode", "hard-quantize a database to codes");
    encode->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    encode->add_option("--items", items_path, "item feature file")->required();
    encode->add_option("--out", out_path, "output code file")->required();
    encode->add_option("--threads", threads, "worker threads");

    auto* search = app.add_subcommand("search", "top-k lookup-table search");
    search->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    search->add_option("--codes", codes_path, "code file")->required();
    search->add_option("--queries", queries_path, "query feature file")->required();
    search->add_option("--k", k, "results per query");
    search->add_option("--threads", threads, "worker threads");

    auto* eval = app.add_subcommand("eval", "retrieval quality in both directions");
    eval->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    eval->add_option("--codes", codes_path, "item code file (re-encoded if omitted)");
    eval->add_option("--queries", queries_path, "query feature file")->required();
    eval->add_option("--items", items_path, "item feature file")->required();
    eval->add_option("--threads", threads, "worker threads");

    auto* bench = app.add_subcommand("bench", "query latency and storage report");
    bench->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    bench->add_option("--codes", codes_path, "code file")->required();
    bench->add_option("--queries", queries_path, "query feature file")->required();
    bench->add_option("--reps", reps, "timed repetitions");
    bench->add_option("--dup-factor", dup_factor, "database duplication factor");
    bench->add_option("--k", k, "results per query");
    bench->add_option("--threads", threads, "worker threads");

    SyntheticSpec spec;
    std::int64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "generate paired synthetic features");
    synth->add_option("--pairs", spec.pairs, "pair count");
    synth->add_option("--latent-dim", spec.latent_dim, "shared latent dimension");
    synth->add_option("--noise", spec.noise, "additive noise level");
    synth->add_option("--query-tokens-min", spec.query_tokens_min, "");
    synth->add_option("--query-tokens-max", spec.query_tokens_max, "");
    synth->add_option("--item-tokens-min", spec.item_tokens_min, "");
    synth->add_option("--item-tokens-max", spec.item_tokens_max, "");
    synth->add_option("--dt", spec.text_dim, "query token dimension");
    synth->add_option("--d", spec.embed_dim, "item token dimension");
    synth->add_option("--n-e", spec.experts, "modality expert count");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out-queries", out_queries, "query feature output")->required();
    synth->add_option("--out-items", out_items, "item feature output")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            return cmd_train(config_path, seed, queries_path, items_path,
                             val_queries_path, val_items_path, out_path, log_path);
        }
        if (encode->parsed()) return cmd_encode(ckpt_path, items_path, out_path, threads);
        if (search->parsed()) {
            return cmd_search(ckpt_path, codes_path, queries_path, k, threads);
        }
        if (eval->parsed()) {
            return cmd_eval(ckpt_path, codes_path, queries_path, items_path, threads);
        }
        if (bench->parsed()) {
            return cmd_bench(ckpt_path, codes_path, queries_path, reps, dup_factor, k,
                             threads);
        }
        if (synth->parsed()) {
            spec.seed = static_cast<std::uint64_t>(synth_seed);
            return cmd_synth(spec, out_queries, out_items);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
