#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hybridq/parameters.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

// Compact-code database. Codes are kept item-major for serialization and
// transposed into per-level m-major blocks for the scan kernel. Immutable
// after build; concurrent queries are safe.
struct CodeIndex {
    std::size_t subspaces = 0;  // M
    std::size_t codewords = 0;  // K
    std::size_t clusters = 0;   // L
    std::uint64_t fingerprint = 0;  // codebook snapshot guard

    std::vector<std::uint64_t> ids;
    std::vector<std::uint16_t> codes;  // item-major, (L+1)*M per item

    // scan layout: per level, M-major (codes_scan[level][m*n + i])
    std::vector<std::vector<std::uint16_t>> codes_scan;

    std::size_t size() const { return ids.size(); }
    std::size_t levels() const { return clusters + 1; }
    void rebuild_scan_layout();
};

// Per-query table set: for each level an M x K matrix of inner products
// between the raw query segment and every normalized codeword.
struct LookupTables {
    std::size_t subspaces = 0;
    std::size_t codewords = 0;
    std::vector<std::vector<double>> levels;  // (L+1) tables, each M*K
};

struct SearchHit {
    std::uint64_t id = 0;
    double score = 0.0;
};

// Hard-quantizes every item at every level (inference mode). Degenerate
// items are rejected with their id in the message. `threads` splits the
// item loop; results are identical for any thread count.
CodeIndex encode_database(const std::vector<TokenBag>& items,
                          const std::vector<std::uint64_t>& ids,
                          const ParameterSet& params, unsigned threads = 1);

// Encodes one already-computed embedding set into a HardCode.
HardCode encode_instance(const InstanceEmbeddings& emb,
                         const std::vector<Tensor>& unit_codebooks);

LookupTables build_lookup(const TokenBag& query, const ParameterSet& params);
LookupTables build_lookup(const InstanceEmbeddings& emb, const ParameterSet& params);

// Sum over sub-spaces of the chosen table entries, in ascending m order.
// Exactly equals <query level embedding, hard reconstruction>.
double aqs(std::span<const double> level_table, std::size_t codewords,
           std::span<const std::uint16_t> code);

// Table-scan ranking under the hybrid similarity
//   score = AQS_coarse + (sum of fine AQS) / L,
// top-k descending, ties broken by ascending id. Throws on an empty index or
// a codebook fingerprint mismatch.
std::vector<SearchHit> hybrid_search(const TokenBag& query, const CodeIndex& index,
                                     const ParameterSet& params, std::size_t k,
                                     unsigned threads = 1);
std::vector<SearchHit> hybrid_search(const LookupTables& tables, const CodeIndex& index,
                                     std::size_t k, unsigned threads = 1);

// Testing oracle: reconstructs every item explicitly and fuses levels with
// the same fixed summation order, so scores match hybrid_search exactly.
// Raw mode bypasses quantization (reconstruction := raw embedding), giving
// the non-compressed reference ranking.
enum class BruteForceMode { Quantized, Raw };
std::vector<SearchHit> brute_force_search(const TokenBag& query,
                                          const std::vector<TokenBag>& items,
                                          const std::vector<std::uint64_t>& ids,
                                          const ParameterSet& params, std::size_t k,
                                          BruteForceMode mode = BruteForceMode::Quantized);

// Code file: magic + version + (M, K, L, count) header, id table, then
// bit-packed codes (1 byte per index at K=256).
void save_code_file(const CodeIndex& index, const std::string& path);
CodeIndex load_code_file(const std::string& path);

// Packed byte size of one item's full code.
std::size_t packed_code_bytes(std::size_t subspaces, std::size_t codewords,
                              std::size_t clusters);

}  // namespace hybridq
