#include "hybridq/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace hybridq {

double recall_at(const std::vector<std::size_t>& ranks, std::size_t n) {
    if (ranks.empty()) throw std::invalid_argument("recall_at: empty rank list");
    std::size_t hits = 0;
    for (auto r : ranks) {
        if (r == 0) throw std::invalid_argument("recall_at: ranks are 1-based");
        if (r <= n) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double median_rank(std::vector<std::size_t> ranks) {
    if (ranks.empty()) throw std::invalid_argument("median_rank: empty rank list");
    std::sort(ranks.begin(), ranks.end());
    const std::size_t n = ranks.size();
    if (n % 2 == 1) return static_cast<double>(ranks[n / 2]);
    return 0.5 * (static_cast<double>(ranks[n / 2 - 1]) + static_cast<double>(ranks[n / 2]));
}

double geometric_mean(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("geometric_mean: empty input");
    double log_sum = 0.0;
    for (double v : values) {
        if (v < 0.0) throw std::invalid_argument("geometric_mean: negative input");
        if (v == 0.0) return 0.0;
        log_sum += std::log(v);
    }
    return std::exp(log_sum / static_cast<double>(values.size()));
}

std::vector<std::size_t> ground_truth_ranks(const std::vector<TokenBag>& queries,
                                            const CodeIndex& index,
                                            const ParameterSet& params,
                                            unsigned threads) {
    std::vector<std::size_t> ranks(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto hits = hybrid_search(queries[i], index, params, index.size(), threads);
        std::size_t rank = 0;
        for (std::size_t pos = 0; pos < hits.size(); ++pos) {
            if (hits[pos].id == i) {
                rank = pos + 1;
                break;
            }
        }
        if (rank == 0) throw std::runtime_error("ground_truth_ranks: id not in index");
        ranks[i] = rank;
    }
    return ranks;
}

EvalReport make_report(const std::string& direction,
                       const std::vector<std::size_t>& ranks,
                       double mean_query_seconds, std::size_t storage_bytes_per_item) {
    EvalReport r;
    r.direction = direction;
    r.r1 = recall_at(ranks, 1);
    r.r5 = recall_at(ranks, 5);
    r.r10 = recall_at(ranks, 10);
    r.r50 = recall_at(ranks, 50);
    r.mdr = median_rank(ranks);
    r.gmean_recall = geometric_mean({r.r1, r.r5, r.r10});
    r.mean_query_seconds = mean_query_seconds;
    r.storage_bytes_per_item = storage_bytes_per_item;
    return r;
}

void print_report_table(const EvalReport& r, std::ostream& out) {
    out << std::fixed << std::setprecision(2);
    out << r.direction << "\n"
        << "  R@1   " << std::setw(7) << r.r1 << "\n"
        << "  R@5   " << std::setw(7) << r.r5 << "\n"
        << "  R@10  " << std::setw(7) << r.r10 << "\n"
        << "  R@50  " << std::setw(7) << r.r50 << "\n"
        << "  MdR   " << std::setw(7) << r.mdr << "\n"
        << "  gmean " << std::setw(7) << r.gmean_recall << "\n";
    out << std::setprecision(6) << "  query_s " << r.mean_query_seconds << "\n"
        << "  bytes/item " << r.storage_bytes_per_item << "\n";
    out.unsetf(std::ios::fixed);
}

void print_report_keyvalue(const EvalReport& r, std::ostream& out) {
    const std::string p = r.direction + ".";
    out << p << "r1 " << r.r1 << "\n"
        << p << "r5 " << r.r5 << "\n"
        << p << "r10 " << r.r10 << "\n"
        << p << "r50 " << r.r50 << "\n"
        << p << "mdr " << r.mdr << "\n"
        << p << "gmean_recall " << r.gmean_recall << "\n"
        << p << "mean_query_seconds " << r.mean_query_seconds << "\n"
        << p << "storage_bytes_per_item " << r.storage_bytes_per_item << "\n";
}

BenchReport bench_query_time(const CodeIndex& index, const std::vector<TokenBag>& queries,
                             const ParameterSet& params, std::size_t repetitions,
                             std::size_t k, unsigned threads) {
    if (repetitions == 0) {
        throw std::invalid_argument("bench_query_time: repetitions must be >= 1");
    }
    if (queries.empty()) throw std::invalid_argument("bench_query_time: no queries");

    using clock = std::chrono::steady_clock;
    auto run_once = [&](double& encode_s, double& scan_s) {
        for (const auto& q : queries) {
            const auto t0 = clock::now();
            const LookupTables tables = build_lookup(q, params);
            const auto t1 = clock::now();
            volatile double sink = hybrid_search(tables, index, k, threads)[0].score;
            (void)sink;
            const auto t2 = clock::now();
            encode_s += std::chrono::duration<double>(t1 - t0).count();
            scan_s += std::chrono::duration<double>(t2 - t1).count();
        }
    };

    double warm_encode = 0.0, warm_scan = 0.0;
    run_once(warm_encode, warm_scan);

    double encode_s = 0.0, scan_s = 0.0;
    for (std::size_t r = 0; r < repetitions; ++r) run_once(encode_s, scan_s);

    const double per_query =
        1.0 / (static_cast<double>(repetitions) * static_cast<double>(queries.size()));
    BenchReport report;
    report.database_size = index.size();
    report.repetitions = repetitions;
    report.threads = threads;
    report.mean_encode_seconds = encode_s * per_query;
    report.mean_scan_seconds = scan_s * per_query;
    report.mean_total_seconds = (encode_s + scan_s) * per_query;
    report.storage_bytes_per_item =
        packed_code_bytes(index.subspaces, index.codewords, index.clusters);
    return report;
}

void print_bench_report(const BenchReport& r, std::ostream& out) {
    out << "database_size " << r.database_size << "\n"
        << "repetitions " << r.repetitions << "\n"
        << "threads " << r.threads << "\n"
        << "mean_total_seconds " << r.mean_total_seconds << "\n"
        << "mean_encode_seconds " << r.mean_encode_seconds << "\n"
        << "mean_scan_seconds " << r.mean_scan_seconds << "\n"
        << "storage_bytes_per_item " << r.storage_bytes_per_item << "\n";
}

}  // namespace hybridq
