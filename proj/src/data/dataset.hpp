#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/tensor.hpp"

namespace capsnet {

struct NormStats {
  std::vector<double> mean;    // per channel
  std::vector<double> stddev;  // per channel, after the epsilon guard
  bool empty() const { return mean.empty(); }
};

struct Dataset {
  Tensor images;  // [N, C, H, W]
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;
  NormStats stats;  // set once normalized

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.size(1); }
  std::size_t image_size() const { return images.size(2); }
  /// Consistency error when labels and images disagree or a label is out of range.
  void validate() const;
  /// Copies the samples at `indices` (in that order) into a new batch tensor.
  Tensor batch_images(std::span<const std::size_t> indices) const;
};

Dataset subset(const Dataset& d, std::span<const std::size_t> indices);

/// Stratified, seeded split into as many parts as there are fractions.
/// Split sizes follow the fractions (largest remainder); every class's count
/// in every split is within one sample of its proportional share.
/// Configuration error when fractions do not sum to 1 or a split is empty.
std::vector<std::vector<std::size_t>> stratified_split_indices(const std::vector<std::size_t>& labels,
                                                               std::size_t n_classes,
                                                               const std::vector<double>& fractions,
                                                               std::uint64_t seed);
std::vector<Dataset> split(const Dataset& d, const std::vector<double>& fractions, std::uint64_t seed);

/// Per-channel mean and population std of `train`; zero-variance channels
/// get std 1 (a warning is printed).
NormStats compute_stats(const Dataset& train);
Dataset normalize(const Dataset& d, const NormStats& stats);
Dataset denormalize(const Dataset& d);

struct DataSplits {
  Dataset train, val, test;
};

/// Normalizes all three splits with the train split's statistics.
DataSplits normalize_splits(const DataSplits& raw);

/// Raw-tensor dataset container ("CAPSTENS"): tensors "images" [N,C,H,W],
/// "labels" [N]; optional "test_images", "test_labels". Header JSON holds
/// {"n_classes": n}.
void write_dataset_file(const std::filesystem::path& path, const Dataset& train, const Dataset* test = nullptr);
struct LoadedTensors {
  Dataset train;
  bool has_test = false;
  Dataset test;
};
LoadedTensors read_dataset_file(const std::filesystem::path& path);

}  // namespace capsnet
