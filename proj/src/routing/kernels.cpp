#include "routing/kernels.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace capsnet::kernels {

namespace {

using Span = std::span<const double>;

struct FieldDims {
  std::size_t R, L, J, D;
};

std::size_t trailing(const Shape& s, std::size_t from) {
  std::size_t n = 1;
  for (std::size_t d = from; d < s.size(); ++d) n *= s[d];
  return n;
}

Shape concat(Shape head, const Shape& s, std::size_t from) {
  for (std::size_t d = from; d < s.size(); ++d) head.push_back(s[d]);
  return head;
}

FieldDims field_dims(const Tensor& x, const char* what) {
  if (x.dim() < 4) raise(ErrorKind::dimension, std::string(what) + " expects a vote field [R,L,J,...], got " + to_string(x.shape()));
  const auto& s = x.shape();
  return {s[0], s[1], s[2], trailing(s, 3)};
}

void expect_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape() != want)
    raise(ErrorKind::dimension, std::string(what) + ": expected " + to_string(want) + ", got " + to_string(t.shape()));
}

void expect_numel(const Tensor& t, std::size_t n, const Shape& leading, const char* what) {
  if (t.dim() < leading.size() || !std::equal(leading.begin(), leading.end(), t.shape().begin()) || t.numel() != n)
    raise(ErrorKind::dimension, std::string(what) + ": shape " + to_string(t.shape()) + " incompatible with leading " +
                                    to_string(leading));
}

}  // namespace

Tensor pose_transform(const Tensor& poses, const Tensor& transforms) {
  if (poses.dim() != 4 || transforms.dim() != 4)
    raise(ErrorKind::dimension, "pose_transform expects poses [R,L,P,P] and transforms [T,J,P,P], got " +
                                    to_string(poses.shape()) + " and " + to_string(transforms.shape()));
  const std::size_t R = poses.size(0), L = poses.size(1), P = poses.size(2);
  const std::size_t T = transforms.size(0), J = transforms.size(1);
  if (poses.size(3) != P || transforms.size(2) != P || transforms.size(3) != P)
    raise(ErrorKind::dimension, "pose_transform needs square poses matching the transforms: " + to_string(poses.shape()) +
                                    " vs " + to_string(transforms.shape()));
  if (L % T != 0)
    raise(ErrorKind::dimension, "pose_transform: " + std::to_string(L) + " lower capsules do not tile " +
                                    std::to_string(T) + " transform types");
  const std::size_t PP = P * P;
  Span m = poses.values(), w = transforms.values();
  std::vector<double> out(R * L * J * PP, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < L; ++l) {
      const double* ml = m.data() + (r * L + l) * PP;
      const std::size_t t = l % T;
      for (std::size_t j = 0; j < J; ++j) {
        const double* wj = w.data() + (t * J + j) * PP;
        double* o = out.data() + ((r * L + l) * J + j) * PP;
        for (std::size_t a = 0; a < P; ++a)
          for (std::size_t b = 0; b < P; ++b) {
            const double mab = ml[a * P + b];
            for (std::size_t c = 0; c < P; ++c) o[a * P + c] += mab * wj[b * P + c];
          }
      }
    }
  return make_result({R, L, J, P, P}, std::move(out), {poses, transforms},
                     [poses, transforms, R, L, J, T, P, PP](Span g, Span) {
                       auto gm = grad_sink(poses), gw = grad_sink(transforms);
                       Span m = poses.values(), w = transforms.values();
                       for (std::size_t r = 0; r < R; ++r)
                         for (std::size_t l = 0; l < L; ++l) {
                           const std::size_t t = l % T;
                           const double* ml = m.data() + (r * L + l) * PP;
                           for (std::size_t j = 0; j < J; ++j) {
                             const double* gj = g.data() + ((r * L + l) * J + j) * PP;
                             const double* wj = w.data() + (t * J + j) * PP;
                             if (!gm.empty()) {
                               double* gml = gm.data() + (r * L + l) * PP;
                               for (std::size_t a = 0; a < P; ++a)
                                 for (std::size_t b = 0; b < P; ++b) {
                                   double s = 0.0;
                                   for (std::size_t c = 0; c < P; ++c) s += gj[a * P + c] * wj[b * P + c];
                                   gml[a * P + b] += s;
                                 }
                             }
                             if (!gw.empty()) {
                               double* gwj = gw.data() + (t * J + j) * PP;
                               for (std::size_t a = 0; a < P; ++a)
                                 for (std::size_t b = 0; b < P; ++b) {
                                   const double mab = ml[a * P + b];
                                   for (std::size_t c = 0; c < P; ++c) gwj[b * P + c] += mab * gj[a * P + c];
                                 }
                             }
                           }
                         }
                     });
}

Tensor typed_linear(const Tensor& u, const Tensor& weights) {
  if (u.dim() < 3 || weights.dim() != 3)
    raise(ErrorKind::dimension, "typed_linear expects u [R,L,...] and W [T,D,J], got " + to_string(u.shape()) + " and " +
                                    to_string(weights.shape()));
  const std::size_t R = u.size(0), L = u.size(1), D = trailing(u.shape(), 2);
  const std::size_t T = weights.size(0), J = weights.size(2);
  if (weights.size(1) != D || L % T != 0)
    raise(ErrorKind::dimension, "typed_linear: " + to_string(u.shape()) + " incompatible with " + to_string(weights.shape()));
  Span uv = u.values(), wv = weights.values();
  std::vector<double> out(R * L * J, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < L; ++l) {
      const double* ul = uv.data() + (r * L + l) * D;
      const double* wt = wv.data() + (l % T) * D * J;
      double* o = out.data() + (r * L + l) * J;
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t j = 0; j < J; ++j) o[j] += ul[d] * wt[d * J + j];
    }
  return make_result({R, L, J}, std::move(out), {u, weights}, [u, weights, R, L, J, D, T](Span g, Span) {
    auto gu = grad_sink(u), gw = grad_sink(weights);
    Span uv = u.values(), wv = weights.values();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t t = l % T;
        const double* gl = g.data() + (r * L + l) * J;
        const double* ul = uv.data() + (r * L + l) * D;
        for (std::size_t d = 0; d < D; ++d) {
          if (!gu.empty()) {
            double s = 0.0;
            for (std::size_t j = 0; j < J; ++j) s += gl[j] * wv[(t * D + d) * J + j];
            gu[(r * L + l) * D + d] += s;
          }
          if (!gw.empty())
            for (std::size_t j = 0; j < J; ++j) gw[(t * D + d) * J + j] += ul[d] * gl[j];
        }
      }
  });
}

Tensor lower_weighted_sum(const Tensor& w, const Tensor& x) {
  const auto [R, L, J, D] = field_dims(x, "lower_weighted_sum");
  expect_shape(w, {R, L, J}, "lower_weighted_sum weights");
  Span wv = w.values(), xv = x.values();
  std::vector<double> out(R * J * D, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < J; ++j) {
        const double c = wv[(r * L + l) * J + j];
        const double* xs = xv.data() + ((r * L + l) * J + j) * D;
        double* o = out.data() + (r * J + j) * D;
        for (std::size_t d = 0; d < D; ++d) o[d] += c * xs[d];
      }
  return make_result(concat({R, J}, x.shape(), 3), std::move(out), {w, x}, [w, x, R = R, L = L, J = J, D = D](Span g, Span) {
    auto gw = grad_sink(w), gx = grad_sink(x);
    Span wv = w.values(), xv = x.values();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < J; ++j) {
          const std::size_t e = (r * L + l) * J + j;
          const double* gj = g.data() + (r * J + j) * D;
          if (!gw.empty()) {
            const double* xs = xv.data() + e * D;
            double s = 0.0;
            for (std::size_t d = 0; d < D; ++d) s += gj[d] * xs[d];
            gw[e] += s;
          }
          if (!gx.empty()) {
            double* gxs = gx.data() + e * D;
            const double c = wv[e];
            for (std::size_t d = 0; d < D; ++d) gxs[d] += c * gj[d];
          }
        }
  });
}

Tensor vote_agreement(const Tensor& x, const Tensor& y) {
  const auto [R, L, J, D] = field_dims(x, "vote_agreement");
  expect_numel(y, R * J * D, {R, J}, "vote_agreement");
  Span xv = x.values(), yv = y.values();
  std::vector<double> out(R * L * J, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < J; ++j) {
        const double* xs = xv.data() + ((r * L + l) * J + j) * D;
        const double* ys = yv.data() + (r * J + j) * D;
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += xs[d] * ys[d];
        out[(r * L + l) * J + j] = s;
      }
  return make_result({R, L, J}, std::move(out), {x, y}, [x, y, R = R, L = L, J = J, D = D](Span g, Span) {
    auto gx = grad_sink(x), gy = grad_sink(y);
    Span xv = x.values(), yv = y.values();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < J; ++j) {
          const std::size_t e = (r * L + l) * J + j;
          const double ge = g[e];
          if (!gx.empty()) {
            const double* ys = yv.data() + (r * J + j) * D;
            double* gxs = gx.data() + e * D;
            for (std::size_t d = 0; d < D; ++d) gxs[d] += ge * ys[d];
          }
          if (!gy.empty()) {
            const double* xs = xv.data() + e * D;
            double* gys = gy.data() + (r * J + j) * D;
            for (std::size_t d = 0; d < D; ++d) gys[d] += ge * xs[d];
          }
        }
  });
}

Tensor vote_sq_distance(const Tensor& x, const Tensor& mu, const Tensor& precision) {
  const auto [R, L, J, D] = field_dims(x, "vote_sq_distance");
  expect_numel(mu, R * J * D, {R, J}, "vote_sq_distance mean");
  const bool weighted = precision.defined();
  if (weighted) expect_numel(precision, R * J * D, {R, J}, "vote_sq_distance precision");
  Span xv = x.values(), mv = mu.values(), lv = precision.values();
  std::vector<double> out(R * L * J, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < J; ++j) {
        const double* xs = xv.data() + ((r * L + l) * J + j) * D;
        const double* ms = mv.data() + (r * J + j) * D;
        double s = 0.0;
        if (weighted) {
          const double* ls = lv.data() + (r * J + j) * D;
          for (std::size_t d = 0; d < D; ++d) s += ls[d] * (xs[d] - ms[d]) * (xs[d] - ms[d]);
        } else {
          for (std::size_t d = 0; d < D; ++d) s += (xs[d] - ms[d]) * (xs[d] - ms[d]);
        }
        out[(r * L + l) * J + j] = s;
      }
  std::vector<Tensor> inputs{x, mu};
  if (weighted) inputs.push_back(precision);
  return make_result({R, L, J}, std::move(out), std::move(inputs),
                     [x, mu, precision, weighted, R = R, L = L, J = J, D = D](Span g, Span) {
                       auto gx = grad_sink(x), gm = grad_sink(mu);
                       std::span<double> gl = weighted ? grad_sink(precision) : std::span<double>{};
                       Span xv = x.values(), mv = mu.values(), lv = precision.values();
                       for (std::size_t r = 0; r < R; ++r)
                         for (std::size_t l = 0; l < L; ++l)
                           for (std::size_t j = 0; j < J; ++j) {
                             const std::size_t e = (r * L + l) * J + j;
                             const std::size_t c = (r * J + j) * D;
                             const double ge = g[e];
                             for (std::size_t d = 0; d < D; ++d) {
                               const double diff = xv[e * D + d] - mv[c + d];
                               const double lam = weighted ? lv[c + d] : 1.0;
                               const double dx = 2.0 * ge * lam * diff;
                               if (!gx.empty()) gx[e * D + d] += dx;
                               if (!gm.empty()) gm[c + d] -= dx;
                               if (!gl.empty()) gl[c + d] += ge * diff * diff;
                             }
                           }
                     });
}

Tensor lower_weighted_sq_dev(const Tensor& w, const Tensor& x, const Tensor& mu) {
  const auto [R, L, J, D] = field_dims(x, "lower_weighted_sq_dev");
  expect_shape(w, {R, L, J}, "lower_weighted_sq_dev weights");
  expect_numel(mu, R * J * D, {R, J}, "lower_weighted_sq_dev mean");
  Span wv = w.values(), xv = x.values(), mv = mu.values();
  std::vector<double> out(R * J * D, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < J; ++j) {
        const double c = wv[(r * L + l) * J + j];
        const double* xs = xv.data() + ((r * L + l) * J + j) * D;
        const double* ms = mv.data() + (r * J + j) * D;
        double* o = out.data() + (r * J + j) * D;
        for (std::size_t d = 0; d < D; ++d) o[d] += c * (xs[d] - ms[d]) * (xs[d] - ms[d]);
      }
  return make_result(concat({R, J}, x.shape(), 3), std::move(out), {w, x, mu},
                     [w, x, mu, R = R, L = L, J = J, D = D](Span g, Span) {
                       auto gw = grad_sink(w), gx = grad_sink(x), gm = grad_sink(mu);
                       Span wv = w.values(), xv = x.values(), mv = mu.values();
                       for (std::size_t r = 0; r < R; ++r)
                         for (std::size_t l = 0; l < L; ++l)
                           for (std::size_t j = 0; j < J; ++j) {
                             const std::size_t e = (r * L + l) * J + j;
                             const std::size_t c = (r * J + j) * D;
                             const double we = wv[e];
                             double sw = 0.0;
                             for (std::size_t d = 0; d < D; ++d) {
                               const double diff = xv[e * D + d] - mv[c + d];
                               sw += g[c + d] * diff * diff;
                               const double dx = 2.0 * we * g[c + d] * diff;
                               if (!gx.empty()) gx[e * D + d] += dx;
                               if (!gm.empty()) gm[c + d] -= dx;
                             }
                             if (!gw.empty()) gw[e] += sw;
                           }
                     });
}

Tensor squash(const Tensor& s, std::size_t first_axis, double eps) {
  if (first_axis >= s.dim()) raise(ErrorKind::dimension, "squash axis out of range for " + to_string(s.shape()));
  const std::size_t D = trailing(s.shape(), first_axis);
  const std::size_t G = s.numel() / D;
  Span sv = s.values();
  std::vector<double> out(sv.size());
  for (std::size_t gi = 0; gi < G; ++gi) {
    const double* v = sv.data() + gi * D;
    double q = 0.0;
    for (std::size_t d = 0; d < D; ++d) q += v[d] * v[d];
    const double f = q / ((1.0 + q) * std::sqrt(q + eps));
    for (std::size_t d = 0; d < D; ++d) out[gi * D + d] = f * v[d];
  }
  return make_result(s.shape(), std::move(out), {s}, [s, D, G, eps](Span g, Span) {
    auto gs = grad_sink(s);
    Span sv = s.values();
    for (std::size_t gi = 0; gi < G; ++gi) {
      const double* v = sv.data() + gi * D;
      const double* gv = g.data() + gi * D;
      double q = 0.0, dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        q += v[d] * v[d];
        dot += gv[d] * v[d];
      }
      const double root = std::sqrt(q + eps);
      const double f = q / ((1.0 + q) * root);
      const double fprime = (2.0 * (q + eps) - q * (1.0 + q)) / (2.0 * (1.0 + q) * (1.0 + q) * (q + eps) * root);
      for (std::size_t d = 0; d < D; ++d) gs[gi * D + d] += gv[d] * f + 2.0 * v[d] * fprime * dot;
    }
  });
}

Tensor group_norm(const Tensor& x, std::size_t first_axis) {
  if (first_axis == 0 || first_axis >= x.dim())
    raise(ErrorKind::dimension, "group_norm axis out of range for " + to_string(x.shape()));
  const std::size_t D = trailing(x.shape(), first_axis);
  const std::size_t G = x.numel() / D;
  Span xv = x.values();
  std::vector<double> out(G);
  for (std::size_t gi = 0; gi < G; ++gi) {
    double q = 0.0;
    for (std::size_t d = 0; d < D; ++d) q += xv[gi * D + d] * xv[gi * D + d];
    out[gi] = std::sqrt(q);
  }
  Shape shape(x.shape().begin(), x.shape().begin() + static_cast<std::ptrdiff_t>(first_axis));
  return make_result(std::move(shape), std::move(out), {x}, [x, D, G](Span g, Span norms) {
    auto gx = grad_sink(x);
    Span xv = x.values();
    for (std::size_t gi = 0; gi < G; ++gi) {
      if (norms[gi] == 0.0) continue;  // zero subgradient at the origin
      const double scale = g[gi] / norms[gi];
      for (std::size_t d = 0; d < D; ++d) gx[gi * D + d] += scale * xv[gi * D + d];
    }
  });
}

}  // namespace capsnet::kernels
