#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace capsnet {

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction. Parameters without an accumulated gradient are
/// treated as having a zero gradient.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace capsnet
