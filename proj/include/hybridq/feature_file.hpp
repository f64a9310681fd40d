#pragma once

#include <string>
#include <vector>

#include "hybridq/types.hpp"

namespace hybridq {

// Binary feature container for pre-extracted token-embedding bags:
//   magic "HQFT", u32 version, u8 view tag, u32 dim (Dt or D),
//   u32 condensed count (1 for queries, N_E for items), u32 instance count,
//   then per instance: condensed rows, u32 token count, token rows;
//   all row-major little-endian f32. The reader rejects truncation and
//   count/payload mismatches.
void write_feature_file(const std::vector<TokenBag>& bags, const std::string& path);
std::vector<TokenBag> read_feature_file(const std::string& path);

}  // namespace hybridq
