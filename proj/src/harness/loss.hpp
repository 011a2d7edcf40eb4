#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace capsnet {

/// Sum over samples and non-target classes of max(0, m - (a_t - a_j))^2,
/// divided by the batch size. class_activations: [B, n].
/// Contract error on a label >= n or a margin outside (0, 1).
Tensor spread_loss(const Tensor& class_activations, const std::vector<std::size_t>& labels, double margin);

/// Linear from `start` at epoch 1 to `end` at the last epoch.
double annealed_margin(double start, double end, std::size_t epoch, std::size_t epochs);

}  // namespace capsnet
