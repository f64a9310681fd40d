#pragma once

#include <span>
#include <vector>

#include "hybridq/types.hpp"

namespace hybridq {

// sims[i*n + j] = <queries[i], keys[j]>
std::vector<double> similarity_matrix(const VecArray& queries, const VecArray& keys);

// InfoNCE over rows of an n x n similarity matrix whose diagonal holds the
// matched pairs: -(1/n) sum_i log softmax_j(s_ii / tau), computed with
// max-logit subtraction.
double infonce_from_similarities(std::span<const double> sims, std::size_t n, double tau);

// Row-wise softmax probabilities at s/tau; reused by the gradient.
std::vector<double> infonce_row_softmax(std::span<const double> sims, std::size_t n,
                                        double tau);

// d(loss)/d(sims): (1/(n*tau)) * (softmax - I), scaled by `weight`.
std::vector<double> infonce_similarity_grad(std::span<const double> sims, std::size_t n,
                                            double tau, double weight);

// One direction of the asymmetric-quantized contrastive loss: raw embeddings
// of one view as queries, soft-quantized embeddings of the other as keys.
double aqcl_loss(const VecArray& raw_queries, const VecArray& quantized_keys, double tau);

}  // namespace hybridq
