#include "layers/layers.hpp"

#include "core/errors.hpp"
#include "routing/kernels.hpp"

namespace capsnet {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::backbone: return "backbone";
    case LayerKind::primary: return "primary";
    case LayerKind::conv_caps: return "conv_caps";
    case LayerKind::class_caps: return "class_caps";
  }
  return "unknown";
}

void CapsuleTensor::validate() const {
  if (!poses.defined() || poses.dim() != 6 || poses.size(4) != poses.size(5))
    raise(ErrorKind::dimension, "capsule poses must be [N, H, W, C, P, P]" +
                                    (poses.defined() ? ", got " + to_string(poses.shape()) : std::string()));
  Shape want{poses.size(0), poses.size(1), poses.size(2), poses.size(3)};
  if (!activations.defined() || activations.shape() != want)
    raise(ErrorKind::dimension, "capsule activations must be " + to_string(want));
}

namespace {

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  return x + reshape(bias, {bias.numel(), 1, 1});
}

}  // namespace

Tensor backbone_forward(const Tensor& images, const BackboneParams& params) {
  if (images.dim() != 4)
    raise(ErrorKind::dimension, "images must be [N, C, H, W], got " + to_string(images.shape()));
  if (images.size(1) != params.conv1_weight.size(1))
    raise(ErrorKind::configuration, "backbone expects " + std::to_string(params.conv1_weight.size(1)) +
                                        " input channels, got " + std::to_string(images.size(1)));
  Tensor h = tanh(add_channel_bias(conv2d(images, params.conv1_weight, 2, 2), params.conv1_bias));
  return tanh(add_channel_bias(conv2d(h, params.conv2_weight, 2, 2), params.conv2_bias));
}

CapsuleTensor primary_caps_forward(const Tensor& features, const PrimaryParams& params, std::size_t n_caps,
                                   std::size_t pose_dim) {
  if (features.dim() != 4)
    raise(ErrorKind::dimension, "features must be [N, F, H, W], got " + to_string(features.shape()));
  const std::size_t N = features.size(0), F = features.size(1), H = features.size(2), W = features.size(3);
  const std::size_t PP = pose_dim * pose_dim;
  if (n_caps == 0 || F % (n_caps * (PP + 1)) != 0)
    raise(ErrorKind::configuration, std::to_string(F) + " feature channels do not divide into " +
                                        std::to_string(n_caps) + " capsules of " + std::to_string(PP) +
                                        " pose entries + 1 activation");
  if (params.pose_weight.size(0) != n_caps * PP || params.act_weight.size(0) != n_caps)
    raise(ErrorKind::configuration, "primary capsule parameters do not match " + std::to_string(n_caps) +
                                        " capsules of pose dim " + std::to_string(pose_dim));
  Tensor pose = add_channel_bias(conv2d(features, params.pose_weight, 1, 0), params.pose_bias);
  pose = permute(reshape(pose, {N, n_caps, PP, H, W}), {0, 3, 4, 1, 2});
  Tensor act = logistic(add_channel_bias(conv2d(features, params.act_weight, 1, 0), params.act_bias));
  return {reshape(pose, {N, H, W, n_caps, pose_dim, pose_dim}), permute(act, {0, 2, 3, 1})};
}

RoutingOutput route_capsules(const Tensor& poses, const Tensor& activations, const CapsLayerParams& params,
                             const RoutingConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::self_routing:
      return self_route(poses, activations, {params.transforms, params.route}, cfg);
    case Algorithm::dynamic:
      return dynamic_route({kernels::pose_transform(poses, params.transforms), activations}, cfg);
    case Algorithm::em:
      return em_route({kernels::pose_transform(poses, params.transforms), activations}, cfg, params.betas);
    case Algorithm::vb:
      return vb_route({kernels::pose_transform(poses, params.transforms), activations}, cfg, params.betas);
  }
  raise(ErrorKind::contract, "unhandled routing algorithm");
}

const WindowGather::Plan& WindowGather::plan(const CapsuleTensor& in, std::size_t K, std::size_t stride,
                                             std::size_t pad) {
  const std::size_t N = in.batch(), H = in.height(), W = in.width(), C = in.n_caps(), P = in.pose_dim();
  auto key = std::make_tuple(N, H, W, C, P, K, stride, pad);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  if (stride == 0 || K > H + 2 * pad || K > W + 2 * pad)
    raise(ErrorKind::configuration, "capsule window " + std::to_string(K) + " stride " + std::to_string(stride) +
                                        " does not fit a " + std::to_string(H) + "x" + std::to_string(W) + " grid");
  Plan p;
  p.out_h = (H + 2 * pad - K) / stride + 1;
  p.out_w = (W + 2 * pad - K) / stride + 1;
  const std::size_t PP = P * P;
  auto act_idx = std::make_shared<std::vector<std::int64_t>>();
  auto pose_idx = std::make_shared<std::vector<std::int64_t>>();
  act_idx->reserve(N * p.out_h * p.out_w * K * K * C);
  pose_idx->reserve(act_idx->capacity() * PP);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < p.out_h; ++oh)
      for (std::size_t ow = 0; ow < p.out_w; ++ow)
        for (std::size_t kh = 0; kh < K; ++kh)
          for (std::size_t kw = 0; kw < K; ++kw) {
            const auto ih = static_cast<std::int64_t>(oh * stride + kh) - static_cast<std::int64_t>(pad);
            const auto iw = static_cast<std::int64_t>(ow * stride + kw) - static_cast<std::int64_t>(pad);
            const bool inside =
                ih >= 0 && iw >= 0 && ih < static_cast<std::int64_t>(H) && iw < static_cast<std::int64_t>(W);
            for (std::size_t c = 0; c < C; ++c) {
              const std::int64_t cap =
                  inside ? (static_cast<std::int64_t>(n * H) + ih) * static_cast<std::int64_t>(W * C) +
                               iw * static_cast<std::int64_t>(C) + static_cast<std::int64_t>(c)
                         : -1;
              act_idx->push_back(cap);
              for (std::size_t d = 0; d < PP; ++d)
                pose_idx->push_back(cap < 0 ? -1 : cap * static_cast<std::int64_t>(PP) + static_cast<std::int64_t>(d));
            }
          }
  p.poses = pose_idx;
  p.activations = act_idx;
  return cache_.emplace(key, std::move(p)).first->second;
}

CapsuleTensor conv_caps_forward(const CapsuleTensor& input, const CapsLayerParams& params, const LayerSpec& spec,
                                WindowGather* cache, Tensor* logits) {
  input.validate();
  const std::size_t N = input.batch(), C = input.n_caps(), P = input.pose_dim(), K = spec.kernel;
  const std::size_t types = K * K * C;
  if (params.transforms.shape() != Shape{types, spec.n_caps, P, P})
    raise(ErrorKind::configuration, "conv capsule transforms must be " + to_string(Shape{types, spec.n_caps, P, P}) +
                                        ", got " + to_string(params.transforms.shape()));
  WindowGather local;
  const auto& plan = (cache ? *cache : local).plan(input, K, spec.stride, spec.padding);
  const std::size_t R = N * plan.out_h * plan.out_w;
  Tensor poses = gather(input.poses, plan.poses, {R, types, P, P});
  Tensor acts = gather(input.activations, plan.activations, {R, types});
  RoutingOutput out = route_capsules(poses, acts, params, spec.routing);
  if (logits && out.state.activation_logits.defined())
    *logits = reshape(out.state.activation_logits, {N, plan.out_h, plan.out_w, spec.n_caps});
  return {reshape(out.poses, {N, plan.out_h, plan.out_w, spec.n_caps, P, P}),
          reshape(out.activations, {N, plan.out_h, plan.out_w, spec.n_caps})};
}

RoutingOutput class_caps_forward(const CapsuleTensor& input, const CapsLayerParams& params,
                                 const RoutingConfig& cfg) {
  input.validate();
  const std::size_t N = input.batch(), C = input.n_caps(), P = input.pose_dim();
  const std::size_t L = input.height() * input.width() * C;
  if (params.transforms.dim() != 4 || params.transforms.size(0) != C)
    raise(ErrorKind::configuration, "class capsule transforms must have " + std::to_string(C) + " types, got " +
                                        to_string(params.transforms.shape()));
  return route_capsules(reshape(input.poses, {N, L, P, P}), reshape(input.activations, {N, L}), params, cfg);
}

}  // namespace capsnet
