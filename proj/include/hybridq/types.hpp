#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hybridq/config.hpp"

namespace hybridq {

enum class View : std::uint8_t { Query = 0, Item = 1 };

// Fixed-width rows stored contiguously; the workhorse container for token
// lists and per-level embedding sets.
struct VecArray {
    std::size_t dim = 0;
    std::vector<double> data;

    VecArray() = default;
    explicit VecArray(std::size_t d) : dim(d) {}
    VecArray(std::size_t rows, std::size_t d) : dim(d), data(rows * d, 0.0) {}

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
    double* row(std::size_t i) { return data.data() + i * dim; }
    const double* row(std::size_t i) const { return data.data() + i * dim; }
    std::span<double> row_span(std::size_t i) { return {row(i), dim}; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), dim}; }
    void push_back(std::span<const double> v) {
        data.insert(data.end(), v.begin(), v.end());
    }
};

// One instance of one view: variable-length token embeddings plus the
// condensed tokens (CLS for queries, per-expert AGG for items).
struct TokenBag {
    View view = View::Query;
    VecArray tokens;     // N x Dt (query) or N x D (item)
    VecArray condensed;  // 1 x Dt (query) or N_E x D (item)
};

// Throws std::invalid_argument when the bag violates its invariants for the
// given config (empty tokens, wrong dimensions, non-finite values).
void validate_bag(const TokenBag& bag, const EngineConfig& cfg);

// Compact code of one instance: (L+1) levels x M codeword indices,
// level-major with coarse first.
struct HardCode {
    std::vector<std::uint16_t> indices;

    std::span<const std::uint16_t> level(std::size_t l, std::size_t m) const {
        return {indices.data() + l * m, m};
    }
};

// Per-instance embeddings at every level: one coarse vector plus L fine
// vectors, all D-dimensional. Fine rows may be all-zero (empty cluster).
struct InstanceEmbeddings {
    std::vector<double> coarse;
    VecArray fine;  // L x D
};

}  // namespace hybridq
