#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layers/layers.hpp"

namespace capsnet {

struct NetworkSpec {
  std::size_t in_channels = 1;
  std::size_t image_size = 28;
  std::size_t n_conv_caps_layers = 1;  // primary and class capsules not counted
  std::size_t n_caps = 16;
  std::size_t pose_dim = 4;
  std::size_t n_classes = 10;
  std::size_t backbone_channels = 32;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  RoutingConfig routing;
  double beta_a_init = 0.0;
  double beta_u_init = 1.0;

  /// Channels of the backbone output: n_caps * (P*P + 1).
  std::size_t feature_channels() const { return n_caps * (pose_dim * pose_dim + 1); }
  /// Spatial extent after the two stride-2 backbone convolutions.
  std::size_t feature_size() const;
  /// Throws a configuration error; returns false when the depth exceeds the
  /// soft cap of 10 (allowed, caller may warn).
  bool validate() const;

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);
};

/// Closed-form parameter count; see README.
std::size_t closed_form_parameter_count(const NetworkSpec& spec);

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

struct LayerTrace {
  LayerKind kind;
  std::size_t index;   // position in the capsule stack: 0 primary, 1..L conv, L+1 class
  Tensor activations;  // [N, H, W, C], or [N, n_classes] for class capsules
  Tensor logits;       // EM / VB only: pre-logistic activations, same shape
};

struct ForwardResult {
  Tensor class_poses;        // [N, n_classes, P, P]
  Tensor class_activations;  // [N, n_classes]
  std::vector<LayerTrace> trace;
  std::size_t routing_instances = 0;
};

class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed);

  ForwardResult forward(const Tensor& images);

  /// EM / VB only: shifts each routing layer's beta_a, first to last, so its
  /// mean activation logit on `images` is zero. No-op for other algorithms.
  void calibrate(const Tensor& images);

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  /// Backbone, primary, L conv-caps, class caps.
  std::vector<LayerSpec> layers() const;
  /// Trainable tensors in a fixed order; they share storage with the network.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  /// Routing calls made over the lifetime of this network.
  std::size_t routing_instances() const { return routing_calls_; }

 private:
  NetworkSpec spec_;
  std::uint64_t seed_;
  BackboneParams backbone_;
  PrimaryParams primary_;
  std::vector<CapsLayerParams> conv_caps_;
  CapsLayerParams class_caps_;
  std::vector<WindowGather> windows_;
  std::size_t routing_calls_ = 0;

  CapsLayerParams& routing_layer(std::size_t index);
};

/// Index of the largest class activation per sample (ties go to the lower index).
std::vector<std::size_t> predict(const Tensor& class_activations);

}  // namespace capsnet
