// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"

namespace relgen::core {

// Flat weight archive. Binary layout (all integers little-endian):
//
//   magic "RGWT" | u32 version=1 | u32 meta_len | meta (JSON, UTF-8)
//   | u32 entry_count | entries...
//
//   entry:  u32 key_len | key bytes
//           | u32 rank | f64 scale
//           | tensor A | tensor B
//   tensor: u32 ndims | u32 dims[ndims] | f64 data (row-major, IEEE-754 LE)
//           ndims == 0 means the tensor is absent and carries no data.
//
// Low-rank adapter pairs store A (r x d_in) and B (d_out x r) with their rank
// and scale. Plain tensors (distilled encoder weights, extractor gates) store
// the value in A with rank 0, scale 1 and an absent B. The meta JSON records
// the model dimensions used for compatibility checks at load time.
struct ArchiveEntry {
    unsigned rank = 0;
    double scale = 1.0;
    Tensor a;
    Tensor b;  // empty when absent
};

struct WeightArchive {
    std::string meta_json = "{}";
    std::map<std::string, ArchiveEntry> entries;  // sorted keys, stable files

    bool has(const std::string& key) const { return entries.count(key) != 0; }
};

void save_archive(const WeightArchive& ar, const std::string& path);
WeightArchive load_archive(const std::string& path);

}  // namespace relgen::core
