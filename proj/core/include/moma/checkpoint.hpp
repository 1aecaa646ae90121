#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "moma/tensor.hpp"

namespace moma {

// Serialized run state. The on-disk layout is little-endian:
//   magic "MOMA1" | u32 version | u32 len + config text | u32 tensor count |
//   per tensor: u32 len + name | u32 rank | u64 extents... | f64 values...
// Optimizer, RNG and queue state ride along as additional tensors after the
// parameters, using the same encoding.
struct Checkpoint {
  static constexpr char kMagic[5] = {'M', 'O', 'M', 'A', '1'};
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> entries;

  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  void put(const std::string& name, Tensor tensor);
  // Entries whose name starts with `prefix`, with the prefix stripped.
  std::vector<std::pair<std::string, Tensor>> with_prefix(
      const std::string& prefix) const;
};

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// u64 <-> f64 bit views, used to store integer state in tensor entries.
Tensor pack_u64(const std::vector<std::uint64_t>& words);
std::vector<std::uint64_t> unpack_u64(const Tensor& tensor);

}  // namespace moma
