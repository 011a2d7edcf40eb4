#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace capsnet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;   // relative error bound
  double abs_floor = 1e-7;   // denominator floor for near-zero gradients
  std::size_t max_entries = 0;  // per parameter; 0 checks every entry
};

struct GradCheckResult {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst;  // "param[index]: tape=... fd=..." of the worst entry
};

/// Compares tape gradients of `loss_fn` against central finite differences
/// for every entry of every tensor in `params`. `loss_fn` must be a pure
/// function of the parameter values and return a scalar.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                const GradCheckOptions& opts = {});

double relative_error(double analytic, double numeric, double abs_floor);

}  // namespace capsnet
