#include "harness/loss.hpp"

#include "core/errors.hpp"

namespace capsnet {

Tensor spread_loss(const Tensor& class_activations, const std::vector<std::size_t>& labels, double margin) {
  if (class_activations.dim() != 2)
    raise(ErrorKind::dimension, "spread_loss expects [B, n] activations, got " + to_string(class_activations.shape()));
  const std::size_t B = class_activations.size(0), n = class_activations.size(1);
  if (labels.size() != B)
    raise(ErrorKind::contract, "spread_loss: " + std::to_string(labels.size()) + " labels for a batch of " +
                                   std::to_string(B));
  if (!(margin > 0 && margin < 1)) raise(ErrorKind::contract, "spread_loss margin must lie in (0, 1)");
  for (std::size_t y : labels)
    if (y >= n)
      raise(ErrorKind::contract, "spread_loss: label " + std::to_string(y) + " outside " + std::to_string(n) + " classes");

  const auto a = class_activations.values();
  // Per-entry hinge gap, reused by the backward pass.
  std::vector<double> gap(B * n, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double at = a[b * n + labels[b]];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == labels[b]) continue;
      const double g = margin - (at - a[b * n + j]);
      if (g > 0) {
        gap[b * n + j] = g;
        total += g * g;
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  return make_result({}, {total * inv_b}, {class_activations},
                     [x = class_activations, gap = std::move(gap), labels, B, n, inv_b](std::span<const double> og,
                                                                                       std::span<const double>) {
                       auto gx = grad_sink(x);
                       if (gx.empty()) return;
                       const double s = 2.0 * og[0] * inv_b;
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t j = 0; j < n; ++j) {
                           const double g = gap[b * n + j];
                           if (g == 0.0) continue;
                           gx[b * n + j] += s * g;
                           gx[b * n + labels[b]] -= s * g;
                         }
                     });
}

double annealed_margin(double start, double end, std::size_t epoch, std::size_t epochs) {
  if (epochs <= 1) return end;
  const double t = static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
  return start + (end - start) * t;
}

}  // namespace capsnet
