#include "routing/routing.hpp"

#include <cmath>
#include <string>

#include "core/errors.hpp"
#include "core/ops.hpp"
#include "routing/kernels.hpp"

namespace capsnet {

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::dynamic: return "dynamic";
    case Algorithm::em: return "em";
    case Algorithm::vb: return "vb";
    case Algorithm::self_routing: return "self";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "dynamic") return Algorithm::dynamic;
  if (name == "em") return Algorithm::em;
  if (name == "vb") return Algorithm::vb;
  if (name == "self" || name == "self_routing") return Algorithm::self_routing;
  raise(ErrorKind::configuration, "unknown routing algorithm '" + std::string(name) + "'");
}

void RoutingConfig::validate() const {
  if (iterations < 1) raise(ErrorKind::configuration, "routing iterations must be >= 1");
  if (!(epsilon > 0.0)) raise(ErrorKind::configuration, "routing epsilon must be positive");
}

void VoteField::validate() const {
  if (!votes.defined() || votes.dim() != 5 || votes.size(3) != votes.size(4))
    raise(ErrorKind::dimension, "votes must be [B, n_lower, n_higher, P, P]" +
                                    (votes.defined() ? ", got " + to_string(votes.shape()) : std::string()));
  if (!lower_activations.defined() || lower_activations.shape() != Shape{votes.size(0), votes.size(1)})
    raise(ErrorKind::dimension, "lower activations must be [B, n_lower] = " +
                                    to_string(Shape{votes.size(0), votes.size(1)}));
}

namespace {

void expect_algorithm(const RoutingConfig& cfg, Algorithm want) {
  cfg.validate();
  if (cfg.algorithm != want)
    raise(ErrorKind::contract, std::string("routing config selects ") + to_string(cfg.algorithm) + ", called " +
                                   to_string(want));
}

void check_scalars(const ActivationParams& p) {
  if (!p.beta_a.defined() || !p.beta_u.defined() || p.beta_a.numel() != 1 || p.beta_u.numel() != 1)
    raise(ErrorKind::dimension, "beta_a and beta_u must be scalars");
}

// [B, J] -> [B, J, 1, 1] so it broadcasts over pose matrices.
Tensor per_pose(const Tensor& bj) { return reshape(bj, {bj.size(0), bj.size(1), 1, 1}); }

}  // namespace

Tensor squash(const Tensor& v, double eps) { return kernels::squash(v, v.dim() - 1, eps); }

RoutingOutput dynamic_route(const VoteField& field, const RoutingConfig& cfg) {
  expect_algorithm(cfg, Algorithm::dynamic);
  field.validate();
  const std::size_t B = field.batch(), L = field.n_lower(), J = field.n_higher();

  RoutingOutput out;
  Tensor logits(Shape{B, L, J}, 0.0);
  Tensor v;
  for (int it = 0; it < cfg.iterations; ++it) {
    Tensor c = softmax(logits, 2);
    out.state.couplings.push_back(c);
    v = kernels::squash(kernels::lower_weighted_sum(c, field.votes), 2, cfg.epsilon);
    if (it + 1 < cfg.iterations) {
      logits = logits + kernels::vote_agreement(field.votes, v);
      out.state.agreements.push_back(logits);
    }
  }
  out.poses = v;
  out.activations = kernels::group_norm(v, 2);
  return out;
}

RoutingOutput em_route(const VoteField& field, const RoutingConfig& cfg, const ActivationParams& params) {
  expect_algorithm(cfg, Algorithm::em);
  field.validate();
  check_scalars(params);
  const std::size_t B = field.batch(), L = field.n_lower(), J = field.n_higher();
  const Tensor& V = field.votes;
  const Tensor a = reshape(field.lower_activations, {B, L, 1});

  RoutingOutput out;
  Tensor resp(Shape{B, L, J}, 1.0 / static_cast<double>(J));
  out.state.couplings.push_back(resp);
  Tensor weights, mass, mu;
  for (int it = 0; it < cfg.iterations; ++it) {
    // M-step
    weights = resp * a;
    mass = sum_axis(weights, 1) + cfg.epsilon;
    mu = kernels::lower_weighted_sum(weights, V) / per_pose(mass);
    // E-step
    if (it + 1 < cfg.iterations) {
      resp = softmax(-kernels::vote_sq_distance(V, mu), 2);
      out.state.couplings.push_back(resp);
    }
  }
  Tensor cost = sum_axis(weights * kernels::vote_sq_distance(V, mu), 1) / mass;
  out.poses = mu;
  out.state.activation_logits = params.beta_a - params.beta_u * cost;
  out.activations = logistic(out.state.activation_logits);
  return out;
}

RoutingOutput vb_route(const VoteField& field, const RoutingConfig& cfg, const ActivationParams& params) {
  expect_algorithm(cfg, Algorithm::vb);
  field.validate();
  check_scalars(params);
  const std::size_t B = field.batch(), L = field.n_lower(), J = field.n_higher(), P = field.pose_dim();
  const Tensor& V = field.votes;
  const Tensor a = reshape(field.lower_activations, {B, L, 1});

  RoutingOutput out;
  Tensor gamma(Shape{B, L, J}, 1.0 / static_cast<double>(J));
  out.state.couplings.push_back(gamma);
  Tensor mass, mu, precision, log_mix, log_det;
  for (int it = 0; it < cfg.iterations; ++it) {
    Tensor weighted = gamma * a;
    // q*(pi, mu, Lambda): weighted counts, means, diagonal precisions with a
    // unit prior pseudo-count.
    mass = sum_axis(weighted, 1) + cfg.epsilon;
    mu = kernels::lower_weighted_sum(weighted, V) / per_pose(mass);
    Tensor spread = kernels::lower_weighted_sq_dev(weighted, V, mu);
    precision = clamp_min(per_pose(mass + 1.0) / (spread + 1.0), cfg.epsilon, &out.state.precision_clamps);
    log_mix = log(mass / reshape(sum_axis(mass, 1), {B, 1}));
    log_det = sum_axis(reshape(log(precision), {B, J, P * P}), 2);
    // q*(z): responsibilities from expected log-likelihoods.
    Tensor prior = reshape(log_mix + 0.5 * log_det, {B, 1, J});
    gamma = softmax(prior - 0.5 * kernels::vote_sq_distance(V, mu, precision), 2);
    out.state.couplings.push_back(gamma);
  }
  out.state.vb_posterior = {mass / reshape(sum_axis(mass, 1), {B, 1}), mu, precision};
  out.poses = mu;
  out.state.activation_logits = params.beta_a - (params.beta_u + log_mix + log_det);
  out.activations = logistic(out.state.activation_logits);
  return out;
}

RoutingOutput self_route(const Tensor& poses, const Tensor& activations, const SelfRoutingParams& params,
                         const RoutingConfig& cfg) {
  expect_algorithm(cfg, Algorithm::self_routing);
  if (poses.dim() != 4 || poses.size(2) != poses.size(3))
    raise(ErrorKind::dimension, "self_route poses must be [B, L, P, P], got " + to_string(poses.shape()));
  const std::size_t B = poses.size(0), L = poses.size(1);
  if (activations.shape() != Shape{B, L})
    raise(ErrorKind::dimension, "self_route activations must be " + to_string(Shape{B, L}) + ", got " +
                                    to_string(activations.shape()));

  RoutingOutput out;
  Tensor c = softmax(kernels::typed_linear(poses, params.route_weights), 2);
  out.state.couplings.push_back(c);
  Tensor gated = c * reshape(activations, {B, L, 1});
  Tensor votes = kernels::pose_transform(poses, params.pose_weights);
  Tensor gated_mass = sum_axis(gated, 1);
  Tensor total = reshape(sum_axis(activations, 1), {B, 1}) + cfg.epsilon;
  out.activations = gated_mass / total;
  out.poses = kernels::lower_weighted_sum(gated, votes) / per_pose(gated_mass + cfg.epsilon);
  return out;
}

}  // namespace capsnet
