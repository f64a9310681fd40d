#include "hybridq/index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "hybridq/kernels.hpp"
#include "hybridq/model.hpp"
#include "hybridq/quantizer.hpp"

namespace hybridq {

void CodeIndex::rebuild_scan_layout() {
    const std::size_t n = ids.size();
    const std::size_t lv = levels();
    codes_scan.assign(lv, std::vector<std::uint16_t>(n * subspaces));
    for (std::size_t l = 0; l < lv; ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t m = 0; m < subspaces; ++m) {
                codes_scan[l][m * n + i] = codes[(i * lv + l) * subspaces + m];
            }
        }
    }
}

HardCode encode_instance(const InstanceEmbeddings& emb,
                         const std::vector<Tensor>& unit_codebooks) {
    HardCode code;
    const std::size_t M = unit_codebooks[0].shape[0];
    code.indices.reserve(unit_codebooks.size() * M);
    auto res = hard_quantize_prenormalized(emb.coarse, unit_codebooks[0]);
    code.indices.insert(code.indices.end(), res.indices.begin(), res.indices.end());
    for (std::size_t l = 0; l < emb.fine.size(); ++l) {
        res = hard_quantize_prenormalized(emb.fine.row_span(l), unit_codebooks[l + 1]);
        code.indices.insert(code.indices.end(), res.indices.begin(), res.indices.end());
    }
    return code;
}

CodeIndex encode_database(const std::vector<TokenBag>& items,
                          const std::vector<std::uint64_t>& ids,
                          const ParameterSet& params, unsigned threads) {
    if (items.size() != ids.size()) {
        throw std::invalid_argument("encode_database: ids/items size mismatch");
    }
    const auto& cfg = params.config;
    CodeIndex index;
    index.subspaces = cfg.subspaces;
    index.codewords = cfg.codewords;
    index.clusters = cfg.clusters;
    index.fingerprint = codebook_fingerprint(params);
    index.ids = ids;
    index.codes.assign(items.size() * cfg.levels() * cfg.subspaces, 0);

    std::vector<Tensor> unit_codebooks;
    unit_codebooks.reserve(params.codebooks.size());
    for (const auto& cb : params.codebooks) unit_codebooks.push_back(normalize_codebook(cb));

    const std::size_t stride = cfg.levels() * cfg.subspaces;
    std::vector<std::string> errors;

    auto encode_range = [&](std::size_t lo, std::size_t hi, std::string& error) {
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                const InstanceEmbeddings emb = embed_instance(items[i], params);
                const HardCode code = encode_instance(emb, unit_codebooks);
                std::copy(code.indices.begin(), code.indices.end(),
                          index.codes.begin() + i * stride);
            } catch (const std::exception& e) {
                if (error.empty()) {
                    error = "item id " + std::to_string(ids[i]) + ": " + e.what();
                }
            }
        }
    };

    if (threads <= 1 || items.size() < 2) {
        std::string error;
        encode_range(0, items.size(), error);
        if (!error.empty()) throw std::invalid_argument("encode_database: " + error);
    } else {
        const unsigned t = std::min<std::size_t>(threads, items.size());
        std::vector<std::thread> pool;
        errors.assign(t, {});
        const std::size_t chunk = (items.size() + t - 1) / t;
        for (unsigned w = 0; w < t; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(items.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(encode_range, lo, hi, std::ref(errors[w]));
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors) {
            if (!e.empty()) throw std::invalid_argument("encode_database: " + e);
        }
    }

    index.rebuild_scan_layout();
    return index;
}

LookupTables build_lookup(const InstanceEmbeddings& emb, const ParameterSet& params) {
    const auto& cfg = params.config;
    const std::size_t M = cfg.subspaces;
    const std::size_t K = cfg.codewords;
    const std::size_t d = cfg.subspace_dim();

    LookupTables tables;
    tables.subspaces = M;
    tables.codewords = K;
    tables.levels.resize(cfg.levels());

    // Query segments stay raw; only codewords carry the normalization.
    auto fill = [&](std::span<const double> vec, std::size_t level) {
        const Tensor unit = normalize_codebook(params.codebooks[level]);
        auto& table = tables.levels[level];
        table.assign(M * K, 0.0);
        for (std::size_t m = 0; m < M; ++m) {
            const double* seg = vec.data() + m * d;
            const double* cw = unit.ptr() + m * K * d;
            for (std::size_t i = 0; i < K; ++i) {
                table[m * K + i] = kernels::dot(seg, cw + i * d, d);
            }
        }
    };

    fill(emb.coarse, 0);
    for (std::size_t l = 0; l < emb.fine.size(); ++l) {
        fill(emb.fine.row_span(l), l + 1);
    }
    return tables;
}

LookupTables build_lookup(const TokenBag& query, const ParameterSet& params) {
    return build_lookup(embed_instance(query, params), params);
}

double aqs(std::span<const double> level_table, std::size_t codewords,
           std::span<const std::uint16_t> code) {
    double acc = 0.0;
    for (std::size_t m = 0; m < code.size(); ++m) {
        if (code[m] >= codewords) throw std::out_of_range("aqs: codeword index out of range");
        acc += level_table[m * codewords + code[m]];
    }
    return acc;
}

namespace {

void rank_topk(std::vector<SearchHit>& hits, std::size_t k) {
    const auto better = [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    };
    if (k < hits.size()) {
        std::partial_sort(hits.begin(), hits.begin() + k, hits.end(), better);
        hits.resize(k);
    } else {
        std::sort(hits.begin(), hits.end(), better);
    }
}

}  // namespace

std::vector<SearchHit> hybrid_search(const LookupTables& tables, const CodeIndex& index,
                                     std::size_t k, unsigned threads) {
    if (index.size() == 0) throw std::invalid_argument("hybrid_search: empty index");
    if (k == 0) throw std::invalid_argument("hybrid_search: k must be >= 1");
    if (tables.subspaces != index.subspaces || tables.codewords != index.codewords ||
        tables.levels.size() != index.levels()) {
        throw std::invalid_argument("hybrid_search: table/index geometry mismatch");
    }

    const std::size_t n = index.size();
    const std::size_t L = index.clusters;
    std::vector<double> coarse(n, 0.0);
    std::vector<double> fine_acc(n, 0.0);

    // The m-major scan layout strides by the full item count, so partitioned
    // scans walk sub-ranges of each stride. Per item the accumulation order
    // matches lut_scan, so threading never changes a score.
    auto scan_range_strided = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double acc = 0.0;
            const auto& level0 = index.codes_scan[0];
            for (std::size_t m = 0; m < index.subspaces; ++m) {
                acc += tables.levels[0][m * index.codewords + level0[m * n + i]];
            }
            coarse[i] += acc;
            for (std::size_t l = 1; l <= L; ++l) {
                double a = 0.0;
                const auto& lvl = index.codes_scan[l];
                for (std::size_t m = 0; m < index.subspaces; ++m) {
                    a += tables.levels[l][m * index.codewords + lvl[m * n + i]];
                }
                fine_acc[i] += a;
            }
        }
    };

    if (threads <= 1 || n < 1024) {
        kernels::lut_scan(tables.levels[0].data(), index.subspaces, index.codewords,
                          index.codes_scan[0].data(), n, coarse.data());
        for (std::size_t l = 1; l <= L; ++l) {
            kernels::lut_scan(tables.levels[l].data(), index.subspaces, index.codewords,
                              index.codes_scan[l].data(), n, fine_acc.data());
        }
    } else {
        const unsigned t = std::min<std::size_t>(threads, n);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + t - 1) / t;
        for (unsigned w = 0; w < t; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(scan_range_strided, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<SearchHit> hits(n);
    for (std::size_t i = 0; i < n; ++i) {
        hits[i].id = index.ids[i];
        hits[i].score =
            L > 0 ? coarse[i] + fine_acc[i] / static_cast<double>(L) : coarse[i];
    }
    rank_topk(hits, k);
    return hits;
}

std::vector<SearchHit> hybrid_search(const TokenBag& query, const CodeIndex& index,
                                     const ParameterSet& params, std::size_t k,
                                     unsigned threads) {
    if (index.fingerprint != codebook_fingerprint(params)) {
        throw std::invalid_argument(
            "hybrid_search: index was encoded with different codebooks");
    }
    return hybrid_search(build_lookup(query, params), index, k, threads);
}

std::vector<SearchHit> brute_force_search(const TokenBag& query,
                                          const std::vector<TokenBag>& items,
                                          const std::vector<std::uint64_t>& ids,
                                          const ParameterSet& params, std::size_t k,
                                          BruteForceMode mode) {
    if (items.empty()) throw std::invalid_argument("brute_force_search: empty database");
    const auto& cfg = params.config;
    const std::size_t M = cfg.subspaces;
    const std::size_t d = cfg.subspace_dim();
    const std::size_t L = cfg.clusters;

    const InstanceEmbeddings q = embed_instance(query, params);

    std::vector<Tensor> unit_codebooks;
    unit_codebooks.reserve(params.codebooks.size());
    for (const auto& cb : params.codebooks) unit_codebooks.push_back(normalize_codebook(cb));

    // Same summation order as the table path: sub-spaces ascending within a
    // level, coarse first, fine levels accumulated then divided by L once.
    auto level_score = [&](std::span<const double> q_vec, std::span<const double> rec) {
        double acc = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            acc += kernels::dot(q_vec.data() + m * d, rec.data() + m * d, d);
        }
        return acc;
    };

    std::vector<SearchHit> hits(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const InstanceEmbeddings v = embed_instance(items[i], params);

        std::vector<double> rec_coarse;
        VecArray rec_fine(cfg.embed_dim);
        if (mode == BruteForceMode::Quantized) {
            rec_coarse = hard_quantize_prenormalized(v.coarse, unit_codebooks[0])
                             .reconstruction;
            for (std::size_t l = 0; l < L; ++l) {
                rec_fine.push_back(hard_quantize_prenormalized(v.fine.row_span(l),
                                                               unit_codebooks[l + 1])
                                       .reconstruction);
            }
        } else {
            rec_coarse = v.coarse;
            rec_fine = v.fine;
        }

        double score = level_score(q.coarse, rec_coarse);
        if (L > 0) {
            double facc = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
                facc += level_score(q.fine.row_span(l), rec_fine.row_span(l));
            }
            score += facc / static_cast<double>(L);
        }
        hits[i] = {ids[i], score};
    }
    rank_topk(hits, k);
    return hits;
}

// ---------------------------------------------------------------------------
// code file io
// ---------------------------------------------------------------------------

namespace {

constexpr char kCodeMagic[4] = {'H', 'Q', 'C', 'D'};
constexpr std::uint32_t kCodeVersion = 1;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error("code file '" + path + "': " + msg);
}

std::size_t index_bits(std::size_t codewords) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < codewords) ++bits;
    return bits == 0 ? 1 : bits;
}

}  // namespace

std::size_t packed_code_bytes(std::size_t subspaces, std::size_t codewords,
                              std::size_t clusters) {
    const std::size_t total_bits = (clusters + 1) * subspaces * index_bits(codewords);
    return (total_bits + 7) / 8;
}

void save_code_file(const CodeIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");

    auto put = [&out](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    out.write(kCodeMagic, sizeof(kCodeMagic));
    put(kCodeVersion);
    put(static_cast<std::uint32_t>(index.subspaces));
    put(static_cast<std::uint32_t>(index.codewords));
    put(static_cast<std::uint32_t>(index.clusters));
    put(static_cast<std::uint64_t>(index.size()));
    put(index.fingerprint);
    out.write(reinterpret_cast<const char*>(index.ids.data()),
              static_cast<std::streamsize>(index.ids.size() * sizeof(std::uint64_t)));

    const std::size_t bits = index_bits(index.codewords);
    const std::size_t per_item = index.levels() * index.subspaces;
    const std::size_t bytes = packed_code_bytes(index.subspaces, index.codewords,
                                                index.clusters);
    std::vector<std::uint8_t> buf(bytes);
    for (std::size_t i = 0; i < index.size(); ++i) {
        std::fill(buf.begin(), buf.end(), 0);
        std::size_t bitpos = 0;
        for (std::size_t e = 0; e < per_item; ++e) {
            const std::uint32_t v = index.codes[i * per_item + e];
            for (std::size_t b = 0; b < bits; ++b, ++bitpos) {
                if ((v >> b) & 1u) buf[bitpos >> 3] |= std::uint8_t(1u << (bitpos & 7));
            }
        }
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
    }
    if (!out) fail(path, "write failed");
}

CodeIndex load_code_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");

    auto get = [&in, &path](auto& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) fail(path, "truncated");
    };

    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCodeMagic, sizeof(kCodeMagic)) != 0) {
        fail(path, "bad magic");
    }
    std::uint32_t version = 0, m = 0, k = 0, l = 0;
    std::uint64_t count = 0, fingerprint = 0;
    get(version);
    if (version != kCodeVersion) fail(path, "unsupported version");
    get(m);
    get(k);
    get(l);
    get(count);
    get(fingerprint);

    CodeIndex index;
    index.subspaces = m;
    index.codewords = k;
    index.clusters = l;
    index.fingerprint = fingerprint;
    index.ids.resize(count);
    in.read(reinterpret_cast<char*>(index.ids.data()),
            static_cast<std::streamsize>(count * sizeof(std::uint64_t)));
    if (!in) fail(path, "truncated id table");

    const std::size_t bits = index_bits(k);
    const std::size_t per_item = index.levels() * index.subspaces;
    const std::size_t bytes = packed_code_bytes(m, k, l);
    index.codes.assign(count * per_item, 0);
    std::vector<std::uint8_t> buf(bytes);
    for (std::uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
        if (!in) fail(path, "truncated codes");
        std::size_t bitpos = 0;
        for (std::size_t e = 0; e < per_item; ++e) {
            std::uint32_t v = 0;
            for (std::size_t b = 0; b < bits; ++b, ++bitpos) {
                if (buf[bitpos >> 3] & (1u << (bitpos & 7))) v |= (1u << b);
            }
            if (v >= k) fail(path, "codeword index out of range");
            index.codes[i * per_item + e] = static_cast<std::uint16_t>(v);
        }
    }
    // must be at end of file
    in.peek();
    if (!in.eof()) fail(path, "trailing bytes");
    index.rebuild_scan_layout();
    return index;
}

}  // namespace hybridq
