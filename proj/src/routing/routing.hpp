#pragma once

#include <string_view>
#include <vector>

#include "core/tensor.hpp"

namespace capsnet {

enum class Algorithm { dynamic, em, vb, self_routing };

const char* to_string(Algorithm algorithm);
/// Accepts "dynamic", "em", "vb", "self" / "self_routing".
Algorithm parse_algorithm(std::string_view name);

struct RoutingConfig {
  Algorithm algorithm = Algorithm::dynamic;
  int iterations = 3;
  double epsilon = 1e-8;

  void validate() const;
};

/// Votes from every lower capsule to every higher capsule, plus the lower
/// activations. votes: [B, n_lower, n_higher, P, P]; lower_activations: [B, n_lower].
struct VoteField {
  Tensor votes;
  Tensor lower_activations;

  std::size_t batch() const { return votes.size(0); }
  std::size_t n_lower() const { return votes.size(1); }
  std::size_t n_higher() const { return votes.size(2); }
  std::size_t pose_dim() const { return votes.size(3); }
  void validate() const;
};

/// Diagonal Gaussian-mixture posterior left by the last VB iteration.
struct VBPosterior {
  Tensor mixing;      // pi_j, [B, n_higher], sums to 1 per batch element
  Tensor means;       // mu_j, [B, n_higher, P, P]
  Tensor precisions;  // diag(Lambda_j), [B, n_higher, P, P], entries > 0
};

struct RoutingState {
  // Assignment weights after each update: c (dynamic), R (EM), gamma (VB,
  // entry 0 is the uniform initialisation), the single softmax for self-routing.
  std::vector<Tensor> couplings;
  std::vector<Tensor> agreements;  // dynamic only: accumulated b_ij
  VBPosterior vb_posterior;        // VB only
  Tensor activation_logits;        // EM / VB: argument of the output logistic, [B, n_higher]
  std::size_t precision_clamps = 0;
};

struct RoutingOutput {
  Tensor poses;        // [B, n_higher, P, P]
  Tensor activations;  // [B, n_higher], in [0, 1]
  RoutingState state;
};

/// Per-layer learnable scalars of the clustering activations (shape [1] each).
struct ActivationParams {
  Tensor beta_a;
  Tensor beta_u;
};

struct SelfRoutingParams {
  Tensor pose_weights;   // W^pose, [T, n_higher, P, P]
  Tensor route_weights;  // W^route, [T, P*P, n_higher]
};

/// Routing-by-agreement: softmax couplings over the higher capsules, squashed
/// weighted vote sums, agreement <vote, output> added to the logits between
/// iterations. Activation is the output length.
RoutingOutput dynamic_route(const VoteField& field, const RoutingConfig& cfg);

/// EM clustering: activation-weighted M-step means, E-step responsibilities
/// softmax(-|V - mu|^2). Activation sigma(beta_a - beta_u * cost) with cost the
/// activation-weighted mean squared vote-to-mean distance.
RoutingOutput em_route(const VoteField& field, const RoutingConfig& cfg, const ActivationParams& params);

/// Variational-Bayes routing with a diagonal-covariance Gaussian mixture.
RoutingOutput vb_route(const VoteField& field, const RoutingConfig& cfg, const ActivationParams& params);

/// Single-pass self-routing from lower poses [B, L, P, P] and activations [B, L].
RoutingOutput self_route(const Tensor& poses, const Tensor& activations, const SelfRoutingParams& params,
                         const RoutingConfig& cfg);

/// Squash over the last axis.
Tensor squash(const Tensor& v, double eps = 1e-8);

}  // namespace capsnet
