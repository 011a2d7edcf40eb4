#pragma once

#include "core/tensor.hpp"

// Fused primitives over vote fields. A vote field is laid out as
// [R, L, J, ...pose] where R indexes routing problems (batch x position),
// L lower capsules, J higher capsules; the trailing pose dims are treated as
// one flattened axis of length D. Each kernel records its own backward rule.
namespace capsnet::kernels {

/// Votes V[r,l,j] = M[r,l] . W[l % T, j] for poses [R, L, P, P] and
/// transforms [T, J, P, P]. Returns [R, L, J, P, P].
Tensor pose_transform(const Tensor& poses, const Tensor& transforms);

/// out[r,l,j] = sum_d u[r,l,d] * W[l % T, d, j] for u [R, L, ...] and W [T, D, J].
Tensor typed_linear(const Tensor& u, const Tensor& weights);

/// out[r,j,:] = sum_l w[r,l,j] * x[r,l,j,:]. Returns [R, J, ...pose].
Tensor lower_weighted_sum(const Tensor& w, const Tensor& x);

/// out[r,l,j] = <x[r,l,j,:], y[r,j,:]>. Returns [R, L, J].
Tensor vote_agreement(const Tensor& x, const Tensor& y);

/// out[r,l,j] = sum_d lambda[r,j,d] * (x[r,l,j,d] - mu[r,j,d])^2, lambda = 1
/// when undefined. Returns [R, L, J].
Tensor vote_sq_distance(const Tensor& x, const Tensor& mu, const Tensor& precision = {});

/// out[r,j,d] = sum_l w[r,l,j] * (x[r,l,j,d] - mu[r,j,d])^2. Returns [R, J, ...pose].
Tensor lower_weighted_sq_dev(const Tensor& w, const Tensor& x, const Tensor& mu);

/// Squash each vector formed by the dims from `first_axis` onward:
/// s * |s|^2 / ((1 + |s|^2) * sqrt(|s|^2 + eps)). Norm of the result is < 1.
Tensor squash(const Tensor& s, std::size_t first_axis, double eps);

/// Euclidean norm over the dims from `first_axis` onward.
Tensor group_norm(const Tensor& x, std::size_t first_axis);

}  // namespace capsnet::kernels
