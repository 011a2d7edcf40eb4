#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <random>

#include "core/errors.hpp"
#include "data/tensor_file.hpp"

namespace capsnet {

void Dataset::validate() const {
  if (!images.defined() || images.dim() != 4)
    raise(ErrorKind::consistency, "dataset images must be [N, C, H, W]");
  if (images.size(0) != labels.size())
    raise(ErrorKind::consistency, "dataset has " + std::to_string(images.size(0)) + " images but " +
                                      std::to_string(labels.size()) + " labels");
  for (std::size_t y : labels)
    if (y >= n_classes)
      raise(ErrorKind::consistency, "label " + std::to_string(y) + " out of range for " + std::to_string(n_classes) +
                                        " classes");
}

Tensor Dataset::batch_images(std::span<const std::size_t> indices) const {
  const std::size_t per = images.numel() / images.size(0);
  std::vector<double> v(indices.size() * per);
  auto src = images.values();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per, v.begin() + static_cast<std::ptrdiff_t>(i * per));
  return Tensor({indices.size(), images.size(1), images.size(2), images.size(3)}, std::move(v));
}

Dataset subset(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out;
  out.images = d.batch_images(indices);
  out.n_classes = d.n_classes;
  out.stats = d.stats;
  for (std::size_t i : indices) out.labels.push_back(d.labels[i]);
  return out;
}

namespace {

// Largest-remainder apportionment of `total` over weights summing to 1.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& f) {
  std::vector<std::size_t> n(f.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double q = static_cast<double>(total) * f[k];
    n[k] = static_cast<std::size_t>(std::floor(q));
    used += n[k];
    rem.push_back({q - std::floor(q), k});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total; ++i, ++used) ++n[rem[i % rem.size()].second];
  return n;
}

}  // namespace

std::vector<std::vector<std::size_t>> stratified_split_indices(const std::vector<std::size_t>& labels,
                                                               std::size_t n_classes,
                                                               const std::vector<double>& fractions,
                                                               std::uint64_t seed) {
  if (fractions.empty()) raise(ErrorKind::configuration, "split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) raise(ErrorKind::configuration, "split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) raise(ErrorKind::configuration, "split fractions must sum to 1");
  const std::size_t N = labels.size(), K = fractions.size();
  std::vector<std::size_t> target = apportion(N, fractions);
  for (std::size_t k = 0; k < K; ++k)
    if (target[k] == 0) raise(ErrorKind::configuration, "split " + std::to_string(k) + " would be empty");

  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < N; ++i) {
    if (labels[i] >= n_classes) raise(ErrorKind::consistency, "label out of range in split");
    by_class[labels[i]].push_back(i);
  }

  // cell[c][k] = floor(n_c * target_k / N), then hand out the leftover units
  // one per cell, always to the split with the most outstanding demand.
  std::vector<std::vector<std::size_t>> cell(n_classes, std::vector<std::size_t>(K));
  std::vector<std::size_t> demand = target;
  std::vector<std::size_t> row_left(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t used = 0;
    for (std::size_t k = 0; k < K; ++k) {
      cell[c][k] = by_class[c].size() * target[k] / N;
      used += cell[c][k];
      demand[k] -= cell[c][k];
    }
    row_left[c] = by_class[c].size() - used;
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return demand[a] > demand[b]; });
    for (std::size_t u = 0; u < row_left[c]; ++u) {
      const std::size_t k = order[u];
      if (demand[k] == 0) raise(ErrorKind::consistency, "stratified split could not balance class " + std::to_string(c));
      ++cell[c][k];
      --demand[k];
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(K);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t m = 0; m < cell[c][k]; ++m) out[k].push_back(idx[pos++]);
  }
  for (auto& part : out) std::shuffle(part.begin(), part.end(), rng);
  return out;
}

std::vector<Dataset> split(const Dataset& d, const std::vector<double>& fractions, std::uint64_t seed) {
  d.validate();
  std::vector<Dataset> out;
  for (const auto& idx : stratified_split_indices(d.labels, d.n_classes, fractions, seed)) out.push_back(subset(d, idx));
  return out;
}

NormStats compute_stats(const Dataset& train) {
  if (train.size() == 0) raise(ErrorKind::configuration, "cannot compute statistics of an empty train split");
  const std::size_t N = train.images.size(0), C = train.images.size(1);
  const std::size_t HW = train.images.size(2) * train.images.size(3);
  auto v = train.images.values();
  NormStats s;
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < HW; ++p) sum += v[(n * C + c) * HW + p];
    const double mean = sum / static_cast<double>(N * HW);
    double sq = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < HW; ++p) {
        const double e = v[(n * C + c) * HW + p] - mean;
        sq += e * e;
      }
    double sd = std::sqrt(sq / static_cast<double>(N * HW));
    if (sd < 1e-8) {
      std::cerr << "warning: channel " << c << " has zero variance; normalizing with std 1\n";
      sd = 1.0;
    }
    s.mean.push_back(mean);
    s.stddev.push_back(sd);
  }
  return s;
}

Dataset normalize(const Dataset& d, const NormStats& stats) {
  const std::size_t N = d.images.size(0), C = d.images.size(1);
  const std::size_t HW = d.images.size(2) * d.images.size(3);
  if (stats.mean.size() != C) raise(ErrorKind::consistency, "normalization stats do not match channel count");
  std::vector<double> v(d.images.values().begin(), d.images.values().end());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) {
        double& x = v[(n * C + c) * HW + p];
        x = (x - stats.mean[c]) / stats.stddev[c];
      }
  Dataset out = d;
  out.images = Tensor(d.images.shape(), std::move(v));
  out.stats = stats;
  return out;
}

Dataset denormalize(const Dataset& d) {
  if (d.stats.empty()) return d;
  const std::size_t N = d.images.size(0), C = d.images.size(1);
  const std::size_t HW = d.images.size(2) * d.images.size(3);
  std::vector<double> v(d.images.values().begin(), d.images.values().end());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) {
        double& x = v[(n * C + c) * HW + p];
        x = x * d.stats.stddev[c] + d.stats.mean[c];
      }
  Dataset out = d;
  out.images = Tensor(d.images.shape(), std::move(v));
  out.stats = {};
  return out;
}

DataSplits normalize_splits(const DataSplits& raw) {
  NormStats s = compute_stats(raw.train);
  return {normalize(raw.train, s), normalize(raw.val, s), normalize(raw.test, s)};
}

namespace {

Tensor labels_tensor(const Dataset& d) {
  return Tensor({d.labels.size()}, std::vector<double>(d.labels.begin(), d.labels.end()));
}

Dataset from_tensors(const Tensor& images, const Tensor& labels, std::size_t n_classes, const std::string& what) {
  Dataset d;
  d.images = images;
  d.n_classes = n_classes;
  for (double y : labels.values()) {
    if (y < 0 || y != std::floor(y)) raise(ErrorKind::format, what + ": labels must be non-negative integers");
    d.labels.push_back(static_cast<std::size_t>(y));
  }
  d.validate();
  return d;
}

}  // namespace

void write_dataset_file(const std::filesystem::path& path, const Dataset& train, const Dataset* test) {
  nlohmann::ordered_json h;
  h["n_classes"] = train.n_classes;
  std::vector<TensorRecord> recs{{"images", train.images}, {"labels", labels_tensor(train)}};
  if (test) {
    recs.push_back({"test_images", test->images});
    recs.push_back({"test_labels", labels_tensor(*test)});
  }
  write_tensor_file(path, kDatasetMagic, h.dump(), recs);
}

LoadedTensors read_dataset_file(const std::filesystem::path& path) {
  TensorContainer c = read_tensor_file(path, kDatasetMagic);
  std::size_t n_classes = 0;
  try {
    n_classes = nlohmann::json::parse(c.header).at("n_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::format, path.string() + ": bad dataset header: " + e.what());
  }
  LoadedTensors out;
  out.train = from_tensors(c.get("images"), c.get("labels"), n_classes, path.string());
  if (c.has("test_images")) {
    out.has_test = true;
    out.test = from_tensors(c.get("test_images"), c.get("test_labels"), n_classes, path.string());
  }
  return out;
}

}  // namespace capsnet
