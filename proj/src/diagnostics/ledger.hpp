#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"
#include "layers/layers.hpp"

namespace capsnet {

inline constexpr double kDeadThreshold = 0.01;

struct CapsuleVerdict {
  std::size_t capsule;
  double mean_activation;  // A_i
  bool dead;               // A_i <= threshold
};

struct LayerReport {
  std::size_t layer;
  LayerKind kind;
  std::uint64_t observations;  // per capsule
  std::vector<CapsuleVerdict> capsules;
  std::size_t dead_count = 0;
  double dead_fraction = 0.0;
};

struct DeadCapsuleReport {
  int epoch = 0;
  double threshold = kDeadThreshold;
  std::vector<LayerReport> layers;
  // Averages over conv-caps layers only; primary and class rows are reported
  // but excluded here.
  double avg_dead_count = 0.0;
  double avg_dead_fraction = 0.0;

  /// Recomputes the per-layer and conv-caps aggregates from the verdicts.
  void recompute_aggregates();
};

/// Running per-capsule activation sums over an evaluation epoch. Each batch
/// adds every (sample, position) activation of every capsule; memory is O(1)
/// per capsule.
class ActivationLedger {
 public:
  explicit ActivationLedger(int epoch = 0) : epoch_(epoch) {}

  void register_layer(std::size_t layer, LayerKind kind, std::size_t n_caps);
  /// activations: [..., n_caps]; every leading entry is one observation.
  /// Contract error for an unregistered layer or a mismatched capsule count.
  void observe_batch(std::size_t layer, const Tensor& activations);
  /// Contract error when any registered layer has no observations.
  DeadCapsuleReport finalize(double threshold = kDeadThreshold) const;

  int epoch() const { return epoch_; }
  std::size_t layer_count() const { return layers_.size(); }

 private:
  struct Layer {
    std::size_t id;
    LayerKind kind;
    std::vector<double> sum, carry;  // Neumaier-compensated
    std::uint64_t count = 0;
  };
  Layer& find(std::size_t layer);

  int epoch_;
  std::vector<Layer> layers_;
};

}  // namespace capsnet
