#include "layers/network.hpp"

#include <json.hpp>
#include <cmath>
#include <random>

#include "core/errors.hpp"

namespace capsnet {

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0 || k > in + 2 * pad) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

Tensor normal_tensor(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

// Identity in every trailing P x P block plus N(0, 0.1) noise.
Tensor transform_init(const Shape& shape, std::mt19937_64& rng) {
  Tensor t = normal_tensor(shape, 0.1, rng);
  const std::size_t P = shape.back();
  auto v = t.mutable_values();
  for (std::size_t blk = 0; blk < t.numel() / (P * P); ++blk)
    for (std::size_t i = 0; i < P; ++i) v[blk * P * P + i * P + i] += 1.0;
  return t;
}

CapsLayerParams caps_params(std::size_t types, std::size_t n_out, const NetworkSpec& spec, std::mt19937_64& rng) {
  const std::size_t P = spec.pose_dim;
  CapsLayerParams p;
  p.transforms = transform_init({types, n_out, P, P}, rng);
  switch (spec.routing.algorithm) {
    case Algorithm::self_routing: p.route = normal_tensor({types, P * P, n_out}, 0.1, rng); break;
    case Algorithm::em:
    case Algorithm::vb:
      p.betas = {Tensor::scalar(spec.beta_a_init), Tensor::scalar(spec.beta_u_init)};
      break;
    case Algorithm::dynamic: break;
  }
  return p;
}

std::size_t caps_param_count(std::size_t types, std::size_t n_out, const NetworkSpec& spec) {
  const std::size_t PP = spec.pose_dim * spec.pose_dim;
  std::size_t n = types * n_out * PP;
  if (spec.routing.algorithm == Algorithm::self_routing) n += types * PP * n_out;
  if (spec.routing.algorithm == Algorithm::em || spec.routing.algorithm == Algorithm::vb) n += 2;
  return n;
}

void add_caps(std::vector<NamedParameter>& out, const std::string& prefix, const CapsLayerParams& p) {
  out.push_back({prefix + ".transforms", p.transforms});
  if (p.route.defined()) out.push_back({prefix + ".route", p.route});
  if (p.betas.beta_a.defined()) {
    out.push_back({prefix + ".beta_a", p.betas.beta_a});
    out.push_back({prefix + ".beta_u", p.betas.beta_u});
  }
}

}  // namespace

std::size_t NetworkSpec::feature_size() const {
  return conv_out(conv_out(image_size, 5, 2, 2), 5, 2, 2);
}

bool NetworkSpec::validate() const {
  auto fail = [](const std::string& m) { raise(ErrorKind::configuration, m); };
  if (in_channels == 0) fail("in_channels must be positive");
  if (n_caps == 0) fail("n_caps must be positive");
  if (pose_dim == 0) fail("pose_dim must be positive");
  if (n_classes < 2) fail("n_classes must be at least 2");
  if (backbone_channels == 0) fail("backbone_channels must be positive");
  if (n_conv_caps_layers == 0) fail("n_conv_caps_layers must be at least 1");
  if (kernel == 0 || stride == 0) fail("capsule kernel and stride must be positive");
  routing.validate();
  std::size_t s = feature_size();
  if (s == 0) fail("image_size " + std::to_string(image_size) + " too small for the backbone");
  for (std::size_t l = 0; l < n_conv_caps_layers; ++l) {
    s = conv_out(s, kernel, stride, padding);
    if (s == 0) fail("conv capsule layer " + std::to_string(l + 1) + " has no output positions");
  }
  return n_conv_caps_layers <= 10;
}

std::string NetworkSpec::to_json() const {
  nlohmann::ordered_json j;
  j["in_channels"] = in_channels;
  j["image_size"] = image_size;
  j["n_conv_caps_layers"] = n_conv_caps_layers;
  j["n_caps"] = n_caps;
  j["pose_dim"] = pose_dim;
  j["n_classes"] = n_classes;
  j["backbone_channels"] = backbone_channels;
  j["kernel"] = kernel;
  j["stride"] = stride;
  j["padding"] = padding;
  j["algorithm"] = to_string(routing.algorithm);
  j["iterations"] = routing.iterations;
  j["epsilon"] = routing.epsilon;
  j["beta_a_init"] = beta_a_init;
  j["beta_u_init"] = beta_u_init;
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  NetworkSpec s;
  try {
    auto j = nlohmann::json::parse(text);
    s.in_channels = j.at("in_channels").get<std::size_t>();
    s.image_size = j.at("image_size").get<std::size_t>();
    s.n_conv_caps_layers = j.at("n_conv_caps_layers").get<std::size_t>();
    s.n_caps = j.at("n_caps").get<std::size_t>();
    s.pose_dim = j.at("pose_dim").get<std::size_t>();
    s.n_classes = j.at("n_classes").get<std::size_t>();
    s.backbone_channels = j.at("backbone_channels").get<std::size_t>();
    s.kernel = j.at("kernel").get<std::size_t>();
    s.stride = j.at("stride").get<std::size_t>();
    s.padding = j.at("padding").get<std::size_t>();
    s.routing.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    s.routing.iterations = j.at("iterations").get<int>();
    s.routing.epsilon = j.at("epsilon").get<double>();
    s.beta_a_init = j.at("beta_a_init").get<double>();
    s.beta_u_init = j.at("beta_u_init").get<double>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::format, std::string("network spec: ") + e.what());
  }
  return s;
}

std::size_t closed_form_parameter_count(const NetworkSpec& s) {
  const std::size_t F = s.feature_channels(), B = s.backbone_channels, PP = s.pose_dim * s.pose_dim;
  std::size_t n = B * s.in_channels * 25 + B + F * B * 25 + F;  // backbone
  n += s.n_caps * PP * F + s.n_caps * PP + s.n_caps * F + s.n_caps;  // primary
  n += s.n_conv_caps_layers * caps_param_count(s.kernel * s.kernel * s.n_caps, s.n_caps, s);
  n += caps_param_count(s.n_caps, s.n_classes, s);
  return n;
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t C = spec_.in_channels, B = spec_.backbone_channels, F = spec_.feature_channels();
  const std::size_t n = spec_.n_caps, PP = spec_.pose_dim * spec_.pose_dim;
  backbone_.conv1_weight = normal_tensor({B, C, 5, 5}, 1.0 / std::sqrt(25.0 * C), rng);
  backbone_.conv1_bias = Tensor({B}, 0.0);
  backbone_.conv2_weight = normal_tensor({F, B, 5, 5}, 1.0 / std::sqrt(25.0 * B), rng);
  backbone_.conv2_bias = Tensor({F}, 0.0);
  primary_.pose_weight = normal_tensor({n * PP, F, 1, 1}, 1.0 / std::sqrt(static_cast<double>(F)), rng);
  primary_.pose_bias = Tensor({n * PP}, 0.0);
  primary_.act_weight = normal_tensor({n, F, 1, 1}, 1.0 / std::sqrt(static_cast<double>(F)), rng);
  primary_.act_bias = Tensor({n}, 0.0);
  for (std::size_t l = 0; l < spec_.n_conv_caps_layers; ++l)
    conv_caps_.push_back(caps_params(spec_.kernel * spec_.kernel * n, n, spec_, rng));
  class_caps_ = caps_params(n, spec_.n_classes, spec_, rng);
  windows_.resize(spec_.n_conv_caps_layers);
  for (auto& p : parameters()) p.tensor.requires_grad_();
}

std::vector<LayerSpec> Network::layers() const {
  std::vector<LayerSpec> out;
  out.push_back({LayerKind::backbone, spec_.backbone_channels, 5, 2, 2, {}});
  out.push_back({LayerKind::primary, spec_.n_caps, 1, 1, 0, {}});
  for (std::size_t l = 0; l < spec_.n_conv_caps_layers; ++l)
    out.push_back({LayerKind::conv_caps, spec_.n_caps, spec_.kernel, spec_.stride, spec_.padding, spec_.routing});
  out.push_back({LayerKind::class_caps, spec_.n_classes, 0, 0, 0, spec_.routing});
  return out;
}

std::vector<NamedParameter> Network::parameters() const {
  std::vector<NamedParameter> out{
      {"backbone.conv1.weight", backbone_.conv1_weight}, {"backbone.conv1.bias", backbone_.conv1_bias},
      {"backbone.conv2.weight", backbone_.conv2_weight}, {"backbone.conv2.bias", backbone_.conv2_bias},
      {"primary.pose.weight", primary_.pose_weight},     {"primary.pose.bias", primary_.pose_bias},
      {"primary.act.weight", primary_.act_weight},       {"primary.act.bias", primary_.act_bias},
  };
  for (std::size_t l = 0; l < conv_caps_.size(); ++l) add_caps(out, "caps" + std::to_string(l + 1), conv_caps_[l]);
  add_caps(out, "class", class_caps_);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

ForwardResult Network::forward(const Tensor& images) {
  ForwardResult res;
  Tensor features = backbone_forward(images, backbone_);
  CapsuleTensor caps = primary_caps_forward(features, primary_, spec_.n_caps, spec_.pose_dim);
  res.trace.push_back({LayerKind::primary, 0, caps.activations, Tensor()});
  auto layer_specs = layers();
  for (std::size_t l = 0; l < conv_caps_.size(); ++l) {
    Tensor logits;
    caps = conv_caps_forward(caps, conv_caps_[l], layer_specs[l + 2], &windows_[l], &logits);
    ++res.routing_instances;
    res.trace.push_back({LayerKind::conv_caps, l + 1, caps.activations, logits});
  }
  RoutingOutput cls = class_caps_forward(caps, class_caps_, spec_.routing);
  ++res.routing_instances;
  res.class_poses = cls.poses;
  res.class_activations = cls.activations;
  res.trace.push_back({LayerKind::class_caps, conv_caps_.size() + 1, cls.activations, cls.state.activation_logits});
  routing_calls_ += res.routing_instances;
  return res;
}

CapsLayerParams& Network::routing_layer(std::size_t index) {
  return index <= conv_caps_.size() ? conv_caps_[index - 1] : class_caps_;
}

void Network::calibrate(const Tensor& images) {
  if (spec_.routing.algorithm != Algorithm::em && spec_.routing.algorithm != Algorithm::vb) return;
  NoGradScope no_grad;
  for (std::size_t k = 1; k <= conv_caps_.size() + 1; ++k) {
    ForwardResult res = forward(images);
    const Tensor& logits = res.trace[k].logits;
    double mean = 0.0;
    for (double v : logits.values()) mean += v;
    mean /= static_cast<double>(logits.numel());
    routing_layer(k).betas.beta_a.mutable_values()[0] -= mean;
  }
}

std::vector<std::size_t> predict(const Tensor& class_activations) {
  if (class_activations.dim() != 2)
    raise(ErrorKind::dimension, "class activations must be [N, n_classes], got " + to_string(class_activations.shape()));
  const std::size_t N = class_activations.size(0), K = class_activations.size(1);
  std::vector<std::size_t> out(N, 0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 1; k < K; ++k)
      if (class_activations.at(i * K + k) > class_activations.at(i * K + out[i])) out[i] = k;
  return out;
}

}  // namespace capsnet
