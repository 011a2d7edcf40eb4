#include "data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "core/errors.hpp"

namespace capsnet {

namespace {

constexpr const char* kNames[] = {"square", "frame",    "disk",      "ring", "hbar",
                                  "vbar",   "diagonal", "antidiagonal", "plus", "triangle"};

// Point (x, y) in shape coordinates [-1, 1]^2; w is the stroke width in the
// same units.
bool inside(std::size_t shape, double x, double y, double w) {
  const double ax = std::abs(x), ay = std::abs(y), r = std::hypot(x, y);
  switch (shape) {
    case 0: return ax <= 0.8 && ay <= 0.8;
    case 1: return ax <= 0.85 && ay <= 0.85 && (ax >= 0.85 - w || ay >= 0.85 - w);
    case 2: return r <= 0.9;
    case 3: return r <= 0.9 && r >= 0.9 - w;
    case 4: return ay <= w / 2 && ax <= 0.95;
    case 5: return ax <= w / 2 && ay <= 0.95;
    case 6: return std::abs(x - y) / std::sqrt(2.0) <= w / 2 && ax <= 0.9 && ay <= 0.9;
    case 7: return std::abs(x + y) / std::sqrt(2.0) <= w / 2 && ax <= 0.9 && ay <= 0.9;
    case 8: return (ay <= w / 2 && ax <= 0.9) || (ax <= w / 2 && ay <= 0.9);
    case 9: return y <= 0.8 && y >= -0.85 && ax <= (y + 0.85) / 1.65 * 0.9;
  }
  return false;
}

}  // namespace

const char* primitive_name(std::size_t label) { return label < 10 ? kNames[label] : "unknown"; }

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2 || spec.n_classes > 10)
    raise(ErrorKind::configuration, "synthetic data supports 2..10 classes, got " + std::to_string(spec.n_classes));
  if (spec.image_size < 8)
    raise(ErrorKind::configuration, "synthetic images must be at least 8x8 to hold the shapes, got " +
                                        std::to_string(spec.image_size));
  if (spec.samples_per_class == 0) raise(ErrorKind::configuration, "samples_per_class must be positive");
  if (spec.noise < 0) raise(ErrorKind::configuration, "noise must be non-negative");

  const std::size_t S = spec.image_size, N = spec.n_classes * spec.samples_per_class;
  const double size = static_cast<double>(S);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> px(N * S * S);
  Dataset d;
  d.n_classes = spec.n_classes;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t label = i % spec.n_classes;
    d.labels.push_back(label);
    const double half = size * (0.28 + 0.14 * unit(rng));  // half-extent in pixels
    const double cx = half + (size - 2 * half) * unit(rng);
    const double cy = half + (size - 2 * half) * unit(rng);
    const double bright = 0.7 + 0.3 * unit(rng);
    const double w = std::max(1.2, 0.12 * size) / half;
    double* img = px.data() + i * S * S;
    for (std::size_t r = 0; r < S; ++r)
      for (std::size_t c = 0; c < S; ++c) {
        int hits = 0;
        for (int sy = 0; sy < 3; ++sy)
          for (int sx = 0; sx < 3; ++sx) {
            const double x = (static_cast<double>(c) + (sx + 0.5) / 3.0 - cx) / half;
            const double y = (static_cast<double>(r) + (sy + 0.5) / 3.0 - cy) / half;
            hits += inside(label, x, y, w) ? 1 : 0;
          }
        img[r * S + c] = bright * hits / 9.0;
      }
    for (std::size_t k = 0; k < S * S; ++k) img[k] = std::clamp(img[k] + spec.noise * noise(rng), 0.0, 1.0);
  }
  d.images = Tensor({N, 1, S, S}, std::move(px));
  return d;
}

}  // namespace capsnet
