#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "core/errors.hpp"
#include "diagnostics/ledger.hpp"
#include "diagnostics/snapshot.hpp"
#include "harness/trainer.hpp"
#include "test_util.hpp"

using namespace capsnet;
using capsnet::test::random_tensor;

namespace {

// Store-everything reference: keep every observation, average at the end.
struct StoreAll {
  std::vector<std::vector<double>> seen;
  explicit StoreAll(std::size_t n) : seen(n) {}
  void add(const Tensor& t) {
    const std::size_t n = seen.size();
    for (std::size_t i = 0; i < t.numel(); ++i) seen[i % n].push_back(t.at(i));
  }
  double mean(std::size_t c) const {
    long double s = 0;
    for (double v : seen[c]) s += v;
    return static_cast<double>(s / seen[c].size());
  }
};

void expect_kind(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "no error raised";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(Ledger, StreamingMeanMatchesStoreEverything) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 16;
    ActivationLedger ledger;
    ledger.register_layer(3, LayerKind::conv_caps, n);
    StoreAll ref(n);
    const int batches = 1 + static_cast<int>(rng() % 30);
    for (int b = 0; b < batches; ++b) {
      // [batch, H, W, n] with varying batch and grid
      const std::size_t B = 1 + rng() % 8, H = 1 + rng() % 4;
      Tensor t = random_tensor({B, H, H, n}, rng, 0, 1);
      ledger.observe_batch(3, t);
      ref.add(t);
    }
    const auto rep = ledger.finalize();
    for (std::size_t c = 0; c < n; ++c) EXPECT_NEAR(rep.layers[0].capsules[c].mean_activation, ref.mean(c), 1e-12);
    EXPECT_EQ(rep.layers[0].observations, ref.seen[0].size());
  }
}

TEST(Ledger, CompensatedSumSurvivesMillionsOfTinyValues) {
  ActivationLedger ledger;
  ledger.register_layer(0, LayerKind::conv_caps, 1);
  ledger.observe_batch(0, Tensor({1, 1}, 1.0));
  Tensor tiny({100000, 1}, 1e-17);
  for (int i = 0; i < 10; ++i) ledger.observe_batch(0, tiny);
  const double expected = (1.0 + 1e6 * 1e-17) / 1000001.0;
  EXPECT_NEAR(ledger.finalize().layers[0].capsules[0].mean_activation, expected, 1e-21);
}

TEST(Ledger, ThresholdIsInclusive) {
  ActivationLedger ledger;
  ledger.register_layer(0, LayerKind::conv_caps, 4);
  ledger.observe_batch(0, Tensor({1, 4}, {0.01, std::nextafter(0.01, 1.0), 0.0, 0.5}));
  const auto rep = ledger.finalize(kDeadThreshold);
  const auto& c = rep.layers[0].capsules;
  EXPECT_EQ(c[0].mean_activation, 0.01);
  EXPECT_TRUE(c[0].dead);
  EXPECT_FALSE(c[1].dead);
  EXPECT_TRUE(c[2].dead);
  EXPECT_FALSE(c[3].dead);
  EXPECT_EQ(rep.layers[0].dead_count, 2u);
  EXPECT_EQ(rep.layers[0].dead_fraction, 0.5);
}

TEST(Ledger, AggregatesCoverConvLayersOnly) {
  ActivationLedger ledger;
  ledger.register_layer(0, LayerKind::primary, 2);
  ledger.register_layer(1, LayerKind::conv_caps, 4);
  ledger.register_layer(2, LayerKind::conv_caps, 4);
  ledger.register_layer(3, LayerKind::class_caps, 2);
  ledger.observe_batch(0, Tensor({1, 2}, 0.0));  // all dead, excluded
  ledger.observe_batch(1, Tensor({1, 4}, {0.0, 0.0, 0.0, 0.9}));
  ledger.observe_batch(2, Tensor({1, 4}, {0.0, 0.9, 0.9, 0.9}));
  ledger.observe_batch(3, Tensor({1, 2}, 0.0));
  const auto rep = ledger.finalize();
  EXPECT_EQ(rep.layers.size(), 4u);
  EXPECT_EQ(rep.avg_dead_count, 2.0);
  EXPECT_EQ(rep.avg_dead_fraction, 0.5);
  EXPECT_EQ(rep.layers[0].dead_count, 2u);
}

TEST(Ledger, ContractErrors) {
  ActivationLedger ledger;
  ledger.register_layer(1, LayerKind::conv_caps, 3);
  expect_kind(ErrorKind::contract, [&] { ledger.register_layer(1, LayerKind::conv_caps, 3); });
  expect_kind(ErrorKind::contract, [&] { ledger.observe_batch(2, Tensor({1, 3})); });
  expect_kind(ErrorKind::contract, [&] { ledger.observe_batch(1, Tensor({1, 4})); });
  expect_kind(ErrorKind::contract, [&] { ledger.finalize(); });
  expect_kind(ErrorKind::contract, [&] { ledger.register_layer(5, LayerKind::conv_caps, 0); });
}

TEST(Snapshot, RoundTripThroughCsv) {
  std::mt19937_64 rng(2);
  ActivationLedger ledger(7);
  ledger.register_layer(0, LayerKind::primary, 5);
  ledger.register_layer(1, LayerKind::conv_caps, 16);
  ledger.register_layer(2, LayerKind::class_caps, 10);
  ledger.observe_batch(0, random_tensor({3, 5}, rng, 0, 1));
  ledger.observe_batch(1, random_tensor({3, 16}, rng, 0, 0.05));
  ledger.observe_batch(2, random_tensor({3, 10}, rng, 0, 1));
  const auto rep = ledger.finalize();
  const SnapshotRecord snap = export_snapshot(rep, 7);
  ASSERT_EQ(snap.rows.size(), 31u);
  const std::string csv = serialize_snapshot(snap);
  const auto rows = parse_snapshot_rows(csv);
  EXPECT_EQ(rows, snap.rows);
  EXPECT_EQ(serialize_snapshot({7, rep.threshold, rows}), csv);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].activation, round_sig9(rows[i].activation));

  const auto back = report_from_rows(rows, rep.threshold);
  ASSERT_EQ(back.layers.size(), rep.layers.size());
  for (std::size_t l = 0; l < rep.layers.size(); ++l) EXPECT_EQ(back.layers[l].dead_count, rep.layers[l].dead_count);
  EXPECT_EQ(back.avg_dead_fraction, rep.avg_dead_fraction);
}

TEST(Snapshot, MalformedInputIsFormatError) {
  const std::string header = "epoch,layer,layer_kind,capsule,activation,dead\n";
  expect_kind(ErrorKind::format, [&] { parse_snapshot_rows("epoch,layer\n"); });
  expect_kind(ErrorKind::format, [&] { parse_snapshot_rows(header + "1,1,conv_caps,0,0.5\n"); });
  expect_kind(ErrorKind::format, [&] { parse_snapshot_rows(header + "1,1,conv_caps,0,0.5,2\n"); });
  expect_kind(ErrorKind::format, [&] { parse_snapshot_rows(header + "1,1,mystery,0,0.5,0\n"); });
  expect_kind(ErrorKind::format, [&] { parse_snapshot_rows(header + "1,x,conv_caps,0,0.5,0\n"); });
  expect_kind(ErrorKind::format, [&] { parse_snapshot_rows(header + "1,1,conv_caps,0,abc,0\n"); });
  EXPECT_TRUE(parse_snapshot_rows(header).empty());
}

TEST(Snapshot, RoundingKeepsNineSignificantDigits) {
  EXPECT_EQ(round_sig9(0.123456789123), 0.123456789);
  EXPECT_EQ(round_sig9(0.01), 0.01);
  EXPECT_EQ(round_sig9(1.0), 1.0);
}

TEST(Telemetry, EvaluationFeedsEveryCapsuleLayer) {
  NetworkSpec s;
  s.image_size = 12;
  s.n_conv_caps_layers = 2;
  s.n_caps = 3;
  s.pose_dim = 2;
  s.n_classes = 4;
  s.backbone_channels = 4;
  s.routing.algorithm = Algorithm::self_routing;
  Network net(s, 1);
  std::mt19937_64 rng(3);
  Dataset d;
  d.images = random_tensor({7, 1, 12, 12}, rng);
  d.labels = {0, 1, 2, 3, 0, 1, 2};
  d.n_classes = 4;
  const EvalResult r = evaluate(net, d, 3, 1, kDeadThreshold);
  ASSERT_EQ(r.report.layers.size(), 4u);
  EXPECT_EQ(r.report.layers[0].kind, LayerKind::primary);
  EXPECT_EQ(r.report.layers[0].observations, 7u * 3 * 3);  // 12 -> 6 -> 3 grid
  EXPECT_EQ(r.report.layers[3].observations, 7u);
  EXPECT_EQ(r.report.layers[3].capsules.size(), 4u);

  // same numbers as feeding the full trace in one batch
  ActivationLedger ledger;
  NoGradScope no_grad;
  const auto fr = net.forward(d.images);
  for (const auto& t : fr.trace) ledger.register_layer(t.index, t.kind, t.activations.shape().back());
  for (const auto& t : fr.trace) ledger.observe_batch(t.index, t.activations);
  const auto full = ledger.finalize();
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t c = 0; c < full.layers[l].capsules.size(); ++c)
      EXPECT_NEAR(r.report.layers[l].capsules[c].mean_activation, full.layers[l].capsules[c].mean_activation, 1e-12);
}
