#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hybridq/index.hpp"
#include "hybridq/parameters.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

// 100 * |{rank <= N}| / count over 1-based ground-truth ranks.
double recall_at(const std::vector<std::size_t>& ranks, std::size_t n);

// Middle value for odd counts, mean of the two middle values for even counts.
double median_rank(std::vector<std::size_t> ranks);

double geometric_mean(const std::vector<double>& values);

struct EvalReport {
    std::string direction;
    double r1 = 0.0, r5 = 0.0, r10 = 0.0, r50 = 0.0;
    double mdr = 0.0;
    double gmean_recall = 0.0;  // geometric mean of R@1, R@5, R@10
    double mean_query_seconds = 0.0;
    std::size_t storage_bytes_per_item = 0;
};

void print_report_table(const EvalReport& report, std::ostream& out);
void print_report_keyvalue(const EvalReport& report, std::ostream& out);

// 1-based rank of each query's true counterpart (ids pair positionally) under
// the deterministic score-desc/id-asc order.
std::vector<std::size_t> ground_truth_ranks(const std::vector<TokenBag>& queries,
                                            const CodeIndex& index,
                                            const ParameterSet& params,
                                            unsigned threads = 1);

EvalReport make_report(const std::string& direction,
                       const std::vector<std::size_t>& ranks,
                       double mean_query_seconds, std::size_t storage_bytes_per_item);

struct BenchReport {
    std::size_t database_size = 0;
    std::size_t repetitions = 0;
    unsigned threads = 1;
    double mean_total_seconds = 0.0;
    double mean_encode_seconds = 0.0;  // query embedding + table build
    double mean_scan_seconds = 0.0;    // table scan + top-k
    std::size_t storage_bytes_per_item = 0;
};

// Wall-clock (monotonic) means over `repetitions` passes of all queries,
// after one warm-up pass. Throws when repetitions == 0.
BenchReport bench_query_time(const CodeIndex& index, const std::vector<TokenBag>& queries,
                             const ParameterSet& params, std::size_t repetitions,
                             std::size_t k = 10, unsigned threads = 1);

void print_bench_report(const BenchReport& report, std::ostream& out);

}  // namespace hybridq
