#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "routing/routing.hpp"

namespace capsnet {

/// Every field is settable from the JSON config file and from a
/// `--<name> value` CLI flag; list fields take comma-separated values.
struct ExperimentConfig {
  // data
  std::string dataset = "synthetic";  // synthetic | idx | tensors
  std::string data_path;              // raw-tensor container for "tensors"
  std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
  std::size_t n_classes = 10;  // synthetic only
  std::size_t image_size = 12;  // synthetic only
  std::size_t samples_per_class = 100;
  std::uint64_t data_seed = 7;
  double noise = 0.05;
  std::size_t max_train = 0;  // 0 keeps every training sample

  // network
  std::string algorithm = "self";
  std::vector<std::string> algorithms{"em", "vb", "self"};
  std::size_t depth = 1;
  std::vector<std::size_t> depths{1, 3, 6, 10};
  std::size_t n_caps = 8;
  std::size_t pose_dim = 4;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t backbone_channels = 32;
  int iterations = 3;
  double routing_epsilon = 1e-8;
  double beta_a_init = 0.0;
  double beta_u_init = 1.0;
  bool calibrate = true;

  // training
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t eval_batch_size = 100;
  double lr = 3e-3;
  double margin_start = 0.2;
  double margin_end = 0.9;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  // telemetry and output
  double threshold = 0.01;
  bool train_telemetry = false;
  std::string outdir = "capsnet_out";
  std::size_t jobs = 1;
  bool verbose = false;

  /// Configuration error on any out-of-range value.
  void validate() const;

  std::string to_json() const;
  /// Unknown keys and ill-typed values are configuration errors.
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  static const std::vector<std::string>& keys();
  Algorithm train_algorithm() const { return parse_algorithm(algorithm); }
};

}  // namespace capsnet
