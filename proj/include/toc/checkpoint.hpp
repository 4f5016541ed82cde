#pragma once

#include <string>
#include <vector>

#include "toc/optim.hpp"

namespace toc {

// Binary tensor container: "TOCF" magic, u32 LE version, u64 LE manifest
// length, text manifest (one "name shape... @offset" line per tensor),
// then the f32 LE payload. Round-trips bit-exactly.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

// Copies loaded values into an existing store; names and shapes must match
// the store's contents exactly.
void load_into(const std::string& path, ParamStore& store);

// FNV-1a content hash of a file, for provenance records.
std::string file_hash(const std::string& path);

}  // namespace toc
