#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace capsnet {

// Binary container of named tensors, all integers and floats little-endian:
//   magic     8 bytes ("CAPSCKPT" checkpoints, "CAPSTENS" datasets)
//   version   u32 (1)
//   header    u32 length + UTF-8 JSON text
//   count     u32
//   per tensor: u32 name length, name bytes, u32 ndim, u64 extents[ndim],
//               f64 values[product(extents)]

struct TensorRecord {
  std::string name;
  Tensor tensor;
};

struct TensorContainer {
  std::string header;
  std::vector<TensorRecord> tensors;

  /// Raises a format error when the name is missing.
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[] = "CAPSCKPT";
inline constexpr char kDatasetMagic[] = "CAPSTENS";

void write_tensor_file(const std::filesystem::path& path, const char* magic, const std::string& header,
                       const std::vector<TensorRecord>& tensors);

/// Format error on wrong magic or version, length error on truncation.
TensorContainer read_tensor_file(const std::filesystem::path& path, const char* magic);

}  // namespace capsnet
