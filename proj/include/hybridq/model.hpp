#pragma once

#include "hybridq/parameters.hpp"
#include "hybridq/types.hpp"

namespace hybridq {

// Inference-mode embedding of one instance: coarse vector plus L fine
// vectors. Batch-norm reads the running statistics, so results are
// per-instance deterministic and thread-safe under a const ParameterSet.
InstanceEmbeddings embed_instance(const TokenBag& bag, const ParameterSet& params);

}  // namespace hybridq
