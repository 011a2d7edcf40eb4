#pragma once

#include <cstdint>

#include "data/dataset.hpp"

namespace capsnet {

struct SyntheticSpec {
  std::size_t n_classes = 10;  // 2..10, one primitive per class
  std::size_t image_size = 12;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 7;
  double noise = 0.05;  // std of additive pixel noise before clipping to [0, 1]
};

/// Single-channel images of ten primitives (filled square, frame, disk, ring,
/// horizontal bar, vertical bar, two diagonals, plus, triangle) with jittered
/// position, scale and brightness. Classes are interleaved, exactly
/// samples_per_class each. Pixels in [0, 1].
Dataset generate_synthetic(const SyntheticSpec& spec);

const char* primitive_name(std::size_t label);

}  // namespace capsnet
