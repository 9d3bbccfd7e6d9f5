#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "dsct/config.hpp"
#include "dsct/tensor.hpp"

namespace dsct {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> tensor;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  KeyValues config;
  std::vector<TensorRecord> tensors;

  // Throws CorruptCheckpointError if absent or of another dtype.
  template <typename T>
  const Tensor<T>& get(const std::string& name) const;
  const std::string& setting(const std::string& key) const;
};

/// Layout: "DSCT", u32 version, u32 length + config text (sorted key=value
/// lines), u32 record count, then per record: u32 length + name, u8 dtype
/// (0 f32, 1 f64), u32 rank, u64 extents, row-major payload. All integers
/// and payloads little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes to a temporary sibling and renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsct
