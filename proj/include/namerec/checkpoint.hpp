#pragma once

// Binary checkpoint container, little-endian:
//   8 bytes   magic "NRCKPT01"
//   u64       header length L, then L bytes of UTF-8 JSON (model type, config, vocabulary, labels)
//   u64       tensor count
//   per tensor: u32 name length, name bytes, u64 rows, u64 cols, rows * cols float64 row-major

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "namerec/tape.hpp"

namespace namerec {

inline constexpr char kCheckpointMagic[8] = {'N', 'R', 'C', 'K', 'P', 'T', '0', '1'};

struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, nn::Matrix>> tensors;
};

/// Atomic write (temporary file then rename). Tensors follow the parameter set order.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const nn::ParameterSet& params);
/// Throws std::runtime_error on a bad magic, truncation, or malformed header.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copies tensors into same-named parameters; throws on a missing name or shape mismatch.
void apply_checkpoint(const Checkpoint& ckpt, nn::ParameterSet& params);

}  // namespace namerec
