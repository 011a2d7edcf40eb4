#pragma once

#include <cstdint>
#include <filesystem>

#include "data/dataset.hpp"

namespace capsnet {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Big-endian IDX image + label files. Pixels are scaled by 1/255; n_classes
/// is max(label) + 1, at least 2.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes a single-channel dataset; pixels are rounded from [0,1] to bytes.
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& d);

}  // namespace capsnet
