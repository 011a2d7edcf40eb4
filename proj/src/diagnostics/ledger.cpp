#include "diagnostics/ledger.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace capsnet {

void DeadCapsuleReport::recompute_aggregates() {
  double count_sum = 0.0, frac_sum = 0.0;
  std::size_t conv_layers = 0;
  for (auto& l : layers) {
    l.dead_count = 0;
    for (const auto& c : l.capsules) l.dead_count += c.dead ? 1 : 0;
    l.dead_fraction = l.capsules.empty() ? 0.0 : static_cast<double>(l.dead_count) / static_cast<double>(l.capsules.size());
    if (l.kind == LayerKind::conv_caps) {
      ++conv_layers;
      count_sum += static_cast<double>(l.dead_count);
      frac_sum += l.dead_fraction;
    }
  }
  avg_dead_count = conv_layers ? count_sum / static_cast<double>(conv_layers) : 0.0;
  avg_dead_fraction = conv_layers ? frac_sum / static_cast<double>(conv_layers) : 0.0;
}

void ActivationLedger::register_layer(std::size_t layer, LayerKind kind, std::size_t n_caps) {
  for (const auto& l : layers_)
    if (l.id == layer) raise(ErrorKind::contract, "ledger layer " + std::to_string(layer) + " registered twice");
  if (n_caps == 0) raise(ErrorKind::contract, "ledger layer needs at least one capsule");
  layers_.push_back({layer, kind, std::vector<double>(n_caps, 0.0), std::vector<double>(n_caps, 0.0), 0});
}

ActivationLedger::Layer& ActivationLedger::find(std::size_t layer) {
  for (auto& l : layers_)
    if (l.id == layer) return l;
  raise(ErrorKind::contract, "ledger layer " + std::to_string(layer) + " is not registered");
}

void ActivationLedger::observe_batch(std::size_t layer, const Tensor& activations) {
  Layer& l = find(layer);
  const std::size_t n = l.sum.size();
  if (!activations.defined() || activations.shape().back() != n)
    raise(ErrorKind::contract, "ledger layer " + std::to_string(layer) + " has " + std::to_string(n) +
                                   " capsules, observed " +
                                   (activations.defined() ? to_string(activations.shape()) : std::string("nothing")));
  auto v = activations.values();
  const std::size_t rows = v.size() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double x = v[r * n + c];
      const double t = l.sum[c] + x;
      l.carry[c] += std::abs(l.sum[c]) >= std::abs(x) ? (l.sum[c] - t) + x : (x - t) + l.sum[c];
      l.sum[c] = t;
    }
  l.count += rows;
}

DeadCapsuleReport ActivationLedger::finalize(double threshold) const {
  DeadCapsuleReport rep;
  rep.epoch = epoch_;
  rep.threshold = threshold;
  for (const auto& l : layers_) {
    if (l.count == 0) raise(ErrorKind::contract, "ledger layer " + std::to_string(l.id) + " has no observations");
    LayerReport lr{l.id, l.kind, l.count, {}, 0, 0.0};
    for (std::size_t c = 0; c < l.sum.size(); ++c) {
      const double a = (l.sum[c] + l.carry[c]) / static_cast<double>(l.count);
      lr.capsules.push_back({c, a, a <= threshold});
    }
    rep.layers.push_back(std::move(lr));
  }
  rep.recompute_aggregates();
  return rep;
}

}  // namespace capsnet
