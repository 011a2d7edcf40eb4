#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "harness/loss.hpp"
#include "layers/checkpoint.hpp"
#include "layers/network.hpp"
#include "test_util.hpp"

using namespace capsnet;
using capsnet::test::random_tensor;
using capsnet::test::to_vec;

namespace {

const Algorithm kAll[] = {Algorithm::dynamic, Algorithm::em, Algorithm::vb, Algorithm::self_routing};

NetworkSpec tiny(Algorithm a, std::size_t depth = 1) {
  NetworkSpec s;
  s.image_size = 12;
  s.n_conv_caps_layers = depth;
  s.n_caps = 3;
  s.pose_dim = 2;
  s.n_classes = 4;
  s.backbone_channels = 4;
  s.routing.algorithm = a;
  s.routing.iterations = 2;
  return s;
}

Tensor images(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor({n, 1, size, size}, rng, -1, 1);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("capsnet_layers_" + name);
}

}  // namespace

TEST(NetworkSpec, ParameterCountMatchesClosedForm) {
  for (Algorithm a : kAll)
    for (std::size_t depth : {1u, 2u, 4u})
      for (std::size_t caps : {2u, 5u}) {
        NetworkSpec s = tiny(a, depth);
        s.n_caps = caps;
        Network net(s, 1);
        EXPECT_EQ(net.parameter_count(), closed_form_parameter_count(s)) << to_string(a) << " depth " << depth;
      }
}

TEST(NetworkSpec, ParameterCountHandExample) {
  // 1 channel, 32 backbone channels, 16 capsules of 4x4, 10 classes, EM, one conv-caps layer.
  NetworkSpec s;
  s.routing.algorithm = Algorithm::em;
  const std::size_t F = 16 * 17;
  const std::size_t backbone = 32 * 25 + 32 + F * 32 * 25 + F;
  const std::size_t primary = 16 * 16 * F + 16 * 16 + 16 * F + 16;
  const std::size_t conv = 9 * 16 * 16 * 16 + 2;
  const std::size_t cls = 16 * 10 * 16 + 2;
  EXPECT_EQ(closed_form_parameter_count(s), backbone + primary + conv + cls);
}

TEST(NetworkSpec, ValidationAndSoftDepthCap) {
  NetworkSpec s = tiny(Algorithm::em, 10);
  EXPECT_TRUE(s.validate());
  s.n_conv_caps_layers = 11;
  EXPECT_FALSE(s.validate());
  s = tiny(Algorithm::em);
  s.n_caps = 0;
  EXPECT_THROW(s.validate(), Error);
  s = tiny(Algorithm::em);
  s.image_size = 2;
  s.padding = 0;
  try {
    s.validate();
    FAIL() << "tiny image accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
}

TEST(NetworkSpec, JsonRoundTrip) {
  NetworkSpec s = tiny(Algorithm::vb, 3);
  s.beta_a_init = 0.25;
  NetworkSpec t = NetworkSpec::from_json(s.to_json());
  EXPECT_EQ(t.to_json(), s.to_json());
  EXPECT_THROW(NetworkSpec::from_json("{\"in_channels\": 1}"), Error);
}

TEST(Layers, BackboneChannelMismatchIsConfigurationError) {
  Network net(tiny(Algorithm::em), 1);
  BackboneParams p;
  p.conv1_weight = Tensor({4, 3, 5, 5});
  p.conv1_bias = Tensor({4});
  p.conv2_weight = Tensor({8, 4, 5, 5});
  p.conv2_bias = Tensor({8});
  try {
    backbone_forward(images(1, 12, 1), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
}

TEST(Layers, PrimaryChannelSplitMustDivide) {
  PrimaryParams p;
  p.pose_weight = Tensor({12, 15, 1, 1});
  p.pose_bias = Tensor({12});
  p.act_weight = Tensor({3, 15, 1, 1});
  p.act_bias = Tensor({3});
  EXPECT_NO_THROW(primary_caps_forward(Tensor({1, 15, 3, 3}), p, 3, 2));
  try {
    primary_caps_forward(Tensor({1, 16, 3, 3}), p, 3, 2);  // 16 channels cannot hold 3 x (4 + 1)
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
}

TEST(Layers, ConvCapsShapesAndZeroPaddedBorder) {
  std::mt19937_64 rng(5);
  const std::size_t N = 2, H = 4, C = 3, P = 2;
  CapsuleTensor in{random_tensor({N, H, H, C, P, P}, rng), random_tensor({N, H, H, C}, rng, 0, 1)};
  CapsLayerParams params;
  params.transforms = random_tensor({9 * C, 5, P, P}, rng);
  params.route = random_tensor({9 * C, P * P, 5}, rng);
  LayerSpec spec;
  spec.n_caps = 5;
  spec.routing.algorithm = Algorithm::self_routing;
  CapsuleTensor out = conv_caps_forward(in, params, spec);
  EXPECT_EQ(out.poses.shape(), (Shape{N, H, H, 5, P, P}));
  EXPECT_EQ(out.activations.shape(), (Shape{N, H, H, 5}));
  spec.padding = 0;
  out = conv_caps_forward(in, params, spec);
  EXPECT_EQ(out.activations.shape(), (Shape{N, 2, 2, 5}));
  spec.stride = 2;
  spec.padding = 1;
  out = conv_caps_forward(in, params, spec);
  EXPECT_EQ(out.activations.shape(), (Shape{N, 2, 2, 5}));

  // An all-zero input routes to all-zero self-routing activations, border included.
  CapsuleTensor zero{Tensor({1, H, H, C, P, P}), Tensor({1, H, H, C})};
  spec.stride = 1;
  const CapsuleTensor z = conv_caps_forward(zero, params, spec);
  for (double v : z.activations.values()) EXPECT_EQ(v, 0.0);
}

TEST(Layers, ConvCapsRejectsWrongTransformCount) {
  std::mt19937_64 rng(6);
  CapsuleTensor in{random_tensor({1, 3, 3, 2, 2, 2}, rng), random_tensor({1, 3, 3, 2}, rng, 0, 1)};
  CapsLayerParams params;
  params.transforms = random_tensor({9, 4, 2, 2}, rng);  // needs 9 * 2 types
  params.betas = {Tensor::scalar(0.0), Tensor::scalar(1.0)};
  LayerSpec spec;
  spec.n_caps = 4;
  spec.routing.algorithm = Algorithm::em;
  EXPECT_THROW(conv_caps_forward(in, params, spec), Error);
}

TEST(Network, ForwardShapesRangesAndTrace) {
  for (Algorithm a : kAll) {
    Network net(tiny(a, 2), 3);
    ForwardResult r = net.forward(images(5, 12, 2));
    EXPECT_EQ(r.class_activations.shape(), (Shape{5, 4}));
    EXPECT_EQ(r.class_poses.shape(), (Shape{5, 4, 2, 2}));
    ASSERT_EQ(r.trace.size(), 4u);  // primary, 2 conv, class
    EXPECT_EQ(r.trace.front().kind, LayerKind::primary);
    EXPECT_EQ(r.trace.back().kind, LayerKind::class_caps);
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
      EXPECT_EQ(r.trace[k].index, k);
      for (double v : r.trace[k].activations.values()) {
        ASSERT_GE(v, 0.0) << to_string(a);
        ASSERT_LE(v, 1.0) << to_string(a);
      }
      const bool clustered = a == Algorithm::em || a == Algorithm::vb;
      EXPECT_EQ(r.trace[k].logits.defined(), clustered && k > 0) << to_string(a) << " layer " << k;
    }
  }
}

TEST(Network, OneRoutingInstancePerCapsuleLayer) {
  for (std::size_t depth : {1u, 3u}) {
    Network net(tiny(Algorithm::em, depth), 1);
    ForwardResult r = net.forward(images(2, 12, 1));
    EXPECT_EQ(r.routing_instances, depth + 1);
    net.forward(images(2, 12, 1));
    EXPECT_EQ(net.routing_instances(), 2 * (depth + 1));
  }
}

TEST(Network, SeedDeterminesEverything) {
  Network a(tiny(Algorithm::vb), 7), b(tiny(Algorithm::vb), 7), c(tiny(Algorithm::vb), 8);
  const Tensor x = images(3, 12, 4);
  EXPECT_EQ(to_vec(a.forward(x).class_activations), to_vec(b.forward(x).class_activations));
  EXPECT_NE(to_vec(a.forward(x).class_activations), to_vec(c.forward(x).class_activations));
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(to_vec(pa[i].tensor), to_vec(pb[i].tensor)) << pa[i].name;
}

TEST(Network, ParameterNamesAreUniqueAndOrdered) {
  Network net(tiny(Algorithm::self_routing, 2), 1);
  const auto params = net.parameters();
  EXPECT_EQ(params.front().name, "backbone.conv1.weight");
  EXPECT_EQ(params.back().name, "class.route");
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = i + 1; j < params.size(); ++j) EXPECT_NE(params[i].name, params[j].name);
}

TEST(Network, CalibrationCentresClusteringLogits) {
  for (Algorithm a : {Algorithm::em, Algorithm::vb}) {
    Network net(tiny(a, 3), 2);
    const Tensor x = images(8, 12, 3);
    net.calibrate(x);
    NoGradScope no_grad;
    ForwardResult r = net.forward(x);
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
      double mean = 0.0;
      for (double v : r.trace[k].logits.values()) mean += v;
      mean /= static_cast<double>(r.trace[k].logits.numel());
      EXPECT_NEAR(mean, 0.0, 1e-9) << to_string(a) << " layer " << k;
    }
  }
  // other algorithms are left untouched
  Network net(tiny(Algorithm::dynamic), 2), ref(tiny(Algorithm::dynamic), 2);
  net.calibrate(images(4, 12, 3));
  EXPECT_EQ(to_vec(net.forward(images(2, 12, 9)).class_activations),
            to_vec(ref.forward(images(2, 12, 9)).class_activations));
}

TEST(Network, ConstantActivationsGiveChanceAccuracy) {
  // Ties resolve to the lowest index, so a constant classifier on balanced
  // labels scores exactly 1/n.
  const std::size_t n = 10, N = 1000;
  const auto pred = predict(Tensor({N, n}, 0.37));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < N; ++i) correct += pred[i] == i % n;
  EXPECT_NEAR(static_cast<double>(correct) / N, 1.0 / n, 0.03);
}

TEST(Network, GradientsOfFullNetworkMatchFiniteDifferences) {
  for (Algorithm a : kAll) {
    NetworkSpec s = tiny(a);
    s.image_size = 8;
    s.n_caps = 2;
    s.backbone_channels = 2;
    s.n_classes = 3;
    Network net(s, 11);
    const Tensor x = images(2, 8, 12);
    std::vector<Tensor> params;
    for (const auto& p : net.parameters()) params.push_back(p.tensor);
    GradCheckOptions opts;
    opts.max_entries = 6;
    auto r = check_gradients([&] { return spread_loss(net.forward(x).class_activations, {0, 2}, 0.8); }, params, opts);
    EXPECT_TRUE(r.passed) << to_string(a) << ": " << r.worst;
    EXPECT_LT(r.max_rel_error, 1e-4) << to_string(a);
  }
}

TEST(Checkpoint, RoundTripReproducesOutputs) {
  for (Algorithm a : kAll) {
    Network net(tiny(a, 2), 5);
    // move parameters away from the seed's initialization
    for (auto& p : net.parameters())
      for (double& v : p.tensor.mutable_values()) v += 0.01;
    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(net, path);
    auto loaded = load_checkpoint(path);
    const Tensor x = images(3, 12, 6);
    EXPECT_EQ(to_vec(net.forward(x).class_activations), to_vec(loaded->forward(x).class_activations));
    EXPECT_EQ(loaded->spec().to_json(), net.spec().to_json());
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, CorruptionIsReported) {
  Network net(tiny(Algorithm::em), 5);
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(net, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 9);
  try {
    load_checkpoint(path);
    FAIL() << "truncated checkpoint loaded";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::length);
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOTACKPT";
  }
  try {
    load_checkpoint(path);
    FAIL() << "bad magic accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
  std::filesystem::remove(path);
}
