#pragma once

#include <cstddef>
#include <map>
#include <tuple>

#include "core/ops.hpp"
#include "routing/routing.hpp"

namespace capsnet {

/// One layer's grid of capsules. poses [N, H, W, C, P, P], activations [N, H, W, C].
struct CapsuleTensor {
  Tensor poses;
  Tensor activations;

  std::size_t batch() const { return poses.size(0); }
  std::size_t height() const { return poses.size(1); }
  std::size_t width() const { return poses.size(2); }
  std::size_t n_caps() const { return poses.size(3); }
  std::size_t pose_dim() const { return poses.size(4); }
  void validate() const;
};

enum class LayerKind { backbone, primary, conv_caps, class_caps };
const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::conv_caps;
  std::size_t n_caps = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  RoutingConfig routing;
};

struct BackboneParams {
  Tensor conv1_weight, conv1_bias;  // [32, C_in, 5, 5], [32]
  Tensor conv2_weight, conv2_bias;  // [F, 32, 5, 5], [F]
};

/// Two stride-2 5x5 convolutions (padding 2), each followed by tanh.
Tensor backbone_forward(const Tensor& images, const BackboneParams& params);

struct PrimaryParams {
  Tensor pose_weight, pose_bias;  // [C*P*P, F, 1, 1], [C*P*P]
  Tensor act_weight, act_bias;    // [C, F, 1, 1], [C]
};

/// 1x1 convolutions to poses and to logistic activations.
CapsuleTensor primary_caps_forward(const Tensor& features, const PrimaryParams& params, std::size_t n_caps,
                                   std::size_t pose_dim);

/// Transforms and routing learnables of a capsule layer. transforms
/// [T, n_out, P, P] with one transform per lower capsule type; route
/// [T, P*P, n_out] for self-routing only; betas for EM / VB only.
struct CapsLayerParams {
  Tensor transforms;
  Tensor route;
  ActivationParams betas;
};

/// Lower poses [R, L, P, P] and activations [R, L] routed to the layer's
/// higher capsules with the configured algorithm.
RoutingOutput route_capsules(const Tensor& poses, const Tensor& activations, const CapsLayerParams& params,
                             const RoutingConfig& cfg);

/// Caches the K x K window gather for a given input geometry.
class WindowGather {
 public:
  struct Plan {
    GatherIndex poses, activations;
    std::size_t out_h = 0, out_w = 0;
  };
  const Plan& plan(const CapsuleTensor& in, std::size_t kernel, std::size_t stride, std::size_t padding);

 private:
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                      std::size_t>,
           Plan>
      cache_;
};

/// Window of K x K lower capsules around each output position, routed to
/// spec.n_caps higher capsules. Windows reaching past the border see
/// capsules with zero pose and zero activation. `logits`, when given,
/// receives the EM / VB activation logits shaped like the activations.
CapsuleTensor conv_caps_forward(const CapsuleTensor& input, const CapsLayerParams& params, const LayerSpec& spec,
                                WindowGather* cache = nullptr, Tensor* logits = nullptr);

/// Routes every capsule at every position to the class capsules. The
/// transform is shared by all positions of one input capsule type.
RoutingOutput class_caps_forward(const CapsuleTensor& input, const CapsLayerParams& params,
                                 const RoutingConfig& cfg);

}  // namespace capsnet
