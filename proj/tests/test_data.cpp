#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "core/errors.hpp"
#include "data/dataset.hpp"
#include "data/idx.hpp"
#include "data/synthetic.hpp"
#include "data/tensor_file.hpp"
#include "test_util.hpp"

using namespace capsnet;
using capsnet::test::random_tensor;
using capsnet::test::to_vec;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("capsnet_data_" + name);
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 8) & 0xff),
          static_cast<char>(v & 0xff)};
}

void expect_kind(ErrorKind kind, const std::function<void()>& f, const std::string& needle = "") {
  try {
    f();
    FAIL() << "no error raised";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
    if (!needle.empty()) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  }
}

Dataset labelled(std::vector<std::size_t> labels, std::size_t n_classes, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.images = random_tensor({labels.size(), 1, 4, 4}, rng, 0, 1);
  d.labels = std::move(labels);
  d.n_classes = n_classes;
  return d;
}

}  // namespace

// --- IDX ----------------------------------------------------------------------

TEST(Idx, HandBuiltFilesDecode) {
  std::string img = be32(kIdxImageMagic) + be32(2) + be32(2) + be32(3);
  for (int i = 0; i < 12; ++i) img.push_back(static_cast<char>(i * 20));
  std::string lab = be32(kIdxLabelMagic) + be32(2) + std::string{3, 7};
  write_bytes(tmp("a.idx3"), img);
  write_bytes(tmp("a.idx1"), lab);
  Dataset d = load_idx(tmp("a.idx3"), tmp("a.idx1"));
  EXPECT_EQ(d.images.shape(), (Shape{2, 1, 2, 3}));
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{3, 7}));
  EXPECT_EQ(d.n_classes, 8u);
  EXPECT_DOUBLE_EQ(d.images.at(5), 100.0 / 255.0);
}

TEST(Idx, WriteThenLoadRoundTrips) {
  Dataset d = labelled({0, 1, 2, 1, 0}, 3);
  write_idx(tmp("b.idx3"), tmp("b.idx1"), d);
  Dataset e = load_idx(tmp("b.idx3"), tmp("b.idx1"));
  EXPECT_EQ(e.labels, d.labels);
  for (std::size_t i = 0; i < d.images.numel(); ++i) EXPECT_NEAR(e.images.at(i), d.images.at(i), 0.5 / 255 + 1e-12);
  write_idx(tmp("c.idx3"), tmp("c.idx1"), e);
  EXPECT_EQ(read_bytes(tmp("c.idx3")), read_bytes(tmp("b.idx3")));
}

TEST(Idx, WrongMagicNamesTheValue) {
  write_bytes(tmp("m.idx3"), be32(0x00000801) + be32(1) + be32(1) + be32(1) + "x");
  write_bytes(tmp("m.idx1"), be32(kIdxLabelMagic) + be32(1) + "x");
  expect_kind(ErrorKind::format, [] { load_idx(tmp("m.idx3"), tmp("m.idx1")); }, "0x00000801");
}

TEST(Idx, TruncationIsLengthError) {
  write_bytes(tmp("t.idx3"), be32(kIdxImageMagic) + be32(3) + be32(2) + be32(2) + std::string(11, '\0'));
  write_bytes(tmp("t.idx1"), be32(kIdxLabelMagic) + be32(3) + std::string(3, '\0'));
  expect_kind(ErrorKind::length, [] { load_idx(tmp("t.idx3"), tmp("t.idx1")); });
  write_bytes(tmp("t.idx3"), be32(kIdxImageMagic) + be32(3));
  expect_kind(ErrorKind::length, [] { load_idx(tmp("t.idx3"), tmp("t.idx1")); });
  // absurd count in the header must not allocate
  write_bytes(tmp("t.idx3"), be32(kIdxImageMagic) + be32(0xffffffff) + be32(0xffff) + be32(0xffff));
  expect_kind(ErrorKind::length, [] { load_idx(tmp("t.idx3"), tmp("t.idx1")); });
}

TEST(Idx, CountMismatchIsConsistencyError) {
  write_bytes(tmp("n.idx3"), be32(kIdxImageMagic) + be32(2) + be32(1) + be32(1) + std::string(2, '\0'));
  write_bytes(tmp("n.idx1"), be32(kIdxLabelMagic) + be32(3) + std::string(3, '\0'));
  expect_kind(ErrorKind::consistency, [] { load_idx(tmp("n.idx3"), tmp("n.idx1")); });
}

TEST(Idx, MissingFileIsIoError) {
  expect_kind(ErrorKind::io, [] { load_idx(tmp("absent.idx3"), tmp("absent.idx1")); });
}

// --- raw-tensor container ---------------------------------------------------------

TEST(TensorFile, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::vector<TensorRecord> recs{{"a", random_tensor({2, 3}, rng)}, {"bias", Tensor({1}, {-0.0})},
                                 {"w", random_tensor({4, 1, 2, 2}, rng, -1e300, 1e300)}};
  write_tensor_file(tmp("x.bin"), kCheckpointMagic, "{\"k\": 1}", recs);
  TensorContainer c = read_tensor_file(tmp("x.bin"), kCheckpointMagic);
  EXPECT_EQ(c.header, "{\"k\": 1}");
  ASSERT_EQ(c.tensors.size(), 3u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(c.tensors[i].name, recs[i].name);
    EXPECT_EQ(c.tensors[i].tensor.shape(), recs[i].tensor.shape());
    EXPECT_EQ(to_vec(c.tensors[i].tensor), to_vec(recs[i].tensor));
  }
  EXPECT_TRUE(std::signbit(c.get("bias").at(0)));
  expect_kind(ErrorKind::format, [&] { c.get("nope"); });
}

TEST(TensorFile, CorruptionKinds) {
  std::mt19937_64 rng(4);
  write_tensor_file(tmp("y.bin"), kDatasetMagic, "{}", {{"a", random_tensor({3, 3}, rng)}});
  const std::string good = read_bytes(tmp("y.bin"));
  expect_kind(ErrorKind::format, [] { read_tensor_file(tmp("y.bin"), kCheckpointMagic); });
  for (std::size_t cut : {4ul, 10ul, 20ul, good.size() - 1}) {
    write_bytes(tmp("y.bin"), good.substr(0, cut));
    expect_kind(ErrorKind::length, [] { read_tensor_file(tmp("y.bin"), kDatasetMagic); });
  }
  write_bytes(tmp("y.bin"), good + "junk");
  expect_kind(ErrorKind::format, [] { read_tensor_file(tmp("y.bin"), kDatasetMagic); });
  std::string bad_version = good;
  bad_version[8] = 9;
  write_bytes(tmp("y.bin"), bad_version);
  expect_kind(ErrorKind::format, [] { read_tensor_file(tmp("y.bin"), kDatasetMagic); });
}

TEST(TensorFile, DatasetContainerRoundTrip) {
  Dataset train = labelled({0, 1, 1, 2}, 3, 5), test = labelled({2, 0}, 3, 6);
  write_dataset_file(tmp("d.bin"), train, &test);
  LoadedTensors t = read_dataset_file(tmp("d.bin"));
  EXPECT_EQ(t.train.labels, train.labels);
  EXPECT_EQ(to_vec(t.train.images), to_vec(train.images));
  ASSERT_TRUE(t.has_test);
  EXPECT_EQ(t.test.labels, test.labels);
  write_dataset_file(tmp("d2.bin"), train);
  EXPECT_FALSE(read_dataset_file(tmp("d2.bin")).has_test);
}

// --- splits and normalization -------------------------------------------------------

TEST(Split, StratifiedProportionsOverRandomLabelSets) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 2 + rng() % 6, N = 20 + rng() % 300;
    std::vector<std::size_t> labels(N);
    for (auto& y : labels) y = rng() % K;
    const std::vector<double> f{0.7, 0.1, 0.2};
    auto parts = stratified_split_indices(labels, K, f, trial);
    std::set<std::size_t> seen;
    for (const auto& p : parts)
      for (auto i : p) seen.insert(i);
    ASSERT_EQ(seen.size(), N);  // a partition
    std::map<std::size_t, std::size_t> per_class;
    for (auto y : labels) ++per_class[y];
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LE(std::abs(static_cast<double>(parts[k].size()) - N * f[k]), 1.0);
      for (auto [c, n_c] : per_class) {
        std::size_t in = 0;
        for (auto i : parts[k]) in += labels[i] == c;
        // share of this class the split would hold at the split's own proportion
        const double share = static_cast<double>(n_c) * parts[k].size() / N;
        EXPECT_LE(std::abs(static_cast<double>(in) - share), 1.0 + 1e-9) << "class " << c << " split " << k;
      }
    }
  }
}

TEST(Split, SeedDeterminesSplit) {
  std::vector<std::size_t> labels(90);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3;
  EXPECT_EQ(stratified_split_indices(labels, 3, {0.5, 0.5}, 1), stratified_split_indices(labels, 3, {0.5, 0.5}, 1));
  EXPECT_NE(stratified_split_indices(labels, 3, {0.5, 0.5}, 1), stratified_split_indices(labels, 3, {0.5, 0.5}, 2));
}

TEST(Split, BadFractionsAreConfigurationErrors) {
  std::vector<std::size_t> labels{0, 1, 0, 1};
  expect_kind(ErrorKind::configuration, [&] { stratified_split_indices(labels, 2, {0.5, 0.6}, 1); });
  expect_kind(ErrorKind::configuration, [&] { stratified_split_indices(labels, 2, {1.0, 0.0}, 1); });
  expect_kind(ErrorKind::configuration, [&] { stratified_split_indices(labels, 2, {0.95, 0.05}, 1); });
}

TEST(Normalize, TrainStatsAndInverse) {
  std::mt19937_64 rng(8);
  Dataset d;
  d.images = random_tensor({6, 2, 3, 3}, rng, 0, 5);
  d.labels = {0, 1, 0, 1, 0, 1};
  d.n_classes = 2;
  NormStats s = compute_stats(d);
  Dataset n = normalize(d, s);
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t p = 0; p < 9; ++p) {
        const double v = n.images.at((i * 2 + c) * 9 + p);
        sum += v;
        sq += v * v;
      }
    EXPECT_NEAR(sum / 54, 0.0, 1e-12);
    EXPECT_NEAR(sq / 54, 1.0, 1e-12);
  }
  Dataset back = denormalize(n);
  for (std::size_t i = 0; i < d.images.numel(); ++i) EXPECT_NEAR(back.images.at(i), d.images.at(i), 1e-12);
}

TEST(Normalize, ConstantChannelKeepsUnitScale) {
  Dataset d;
  d.images = Tensor({3, 1, 2, 2}, 0.25);
  d.labels = {0, 1, 0};
  d.n_classes = 2;
  NormStats s = compute_stats(d);
  EXPECT_EQ(s.stddev[0], 1.0);
  const Dataset n = normalize(d, s);
  for (double v : n.images.values()) EXPECT_EQ(v, 0.0);
}

TEST(Dataset, LabelOutOfRangeIsConsistencyError) {
  Dataset d = labelled({0, 3}, 3);
  expect_kind(ErrorKind::consistency, [&] { d.validate(); });
}

// --- synthetic generator ---------------------------------------------------------------

TEST(Synthetic, BalancedSeededAndInRange) {
  SyntheticSpec s;
  s.n_classes = 10;
  s.samples_per_class = 12;
  Dataset a = generate_synthetic(s), b = generate_synthetic(s);
  EXPECT_EQ(a.images.shape(), (Shape{120, 1, 12, 12}));
  EXPECT_EQ(to_vec(a.images), to_vec(b.images));
  std::vector<std::size_t> count(10);
  for (auto y : a.labels) ++count[y];
  for (auto c : count) EXPECT_EQ(c, 12u);
  for (double v : a.images.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  s.seed = 8;
  EXPECT_NE(to_vec(generate_synthetic(s).images), to_vec(a.images));
}

TEST(Synthetic, ClassesDifferOnAverage) {
  // Noise-free class means are pairwise distinct: every class is a different shape.
  SyntheticSpec s;
  s.samples_per_class = 40;
  s.noise = 0.0;
  Dataset d = generate_synthetic(s);
  const std::size_t P = 144;
  std::vector<std::vector<double>> mean(10, std::vector<double>(P, 0.0));
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t p = 0; p < P; ++p) mean[d.labels[i]][p] += d.images.at(i * P + p) / 40.0;
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t b = a + 1; b < 10; ++b) {
      double dist = 0;
      for (std::size_t p = 0; p < P; ++p) dist += (mean[a][p] - mean[b][p]) * (mean[a][p] - mean[b][p]);
      EXPECT_GT(std::sqrt(dist), 0.5) << primitive_name(a) << " vs " << primitive_name(b);
    }
}

TEST(Synthetic, InvalidSpecsAreConfigurationErrors) {
  SyntheticSpec s;
  s.n_classes = 11;
  expect_kind(ErrorKind::configuration, [&] { generate_synthetic(s); });
  s = {};
  s.image_size = 6;
  expect_kind(ErrorKind::configuration, [&] { generate_synthetic(s); });
  s = {};
  s.samples_per_class = 0;
  expect_kind(ErrorKind::configuration, [&] { generate_synthetic(s); });
}
