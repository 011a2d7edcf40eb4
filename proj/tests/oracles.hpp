#pragma once

// Unoptimized straight-line reference implementations. Plain loops over
// std::vector, no library calls, written independently of src/.

#include <cmath>
#include <cstddef>
#include <vector>

namespace capsnet::oracle {

using Vec = std::vector<double>;

struct Routed {
  Vec poses;        // [B, J, D]
  Vec activations;  // [B, J]
  std::vector<Vec> couplings;  // per update, [B, L, J]
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void softmax_row(double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - m);
    z += x[i];
  }
  for (std::size_t i = 0; i < n; ++i) x[i] /= z;
}

// votes [B, L, J, D], acts [B, L]
inline Routed dynamic(const Vec& votes, std::size_t B, std::size_t L, std::size_t J, std::size_t D, int iters,
                      double eps) {
  Routed out;
  out.poses.assign(B * J * D, 0.0);
  out.activations.assign(B * J, 0.0);
  Vec logit(B * L * J, 0.0), c(B * L * J);
  for (int it = 0; it < iters; ++it) {
    c = logit;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) softmax_row(&c[(b * L + l) * J], J);
    out.couplings.push_back(c);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < J; ++j) {
        Vec s(D, 0.0);
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t d = 0; d < D; ++d) s[d] += c[(b * L + l) * J + j] * votes[((b * L + l) * J + j) * D + d];
        double q = 0.0;
        for (double x : s) q += x * x;
        double f = q / ((1.0 + q) * std::sqrt(q + eps));
        for (std::size_t d = 0; d < D; ++d) out.poses[(b * J + j) * D + d] = s[d] * f;
      }
    if (it + 1 < iters)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t j = 0; j < J; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) dot += votes[((b * L + l) * J + j) * D + d] * out.poses[(b * J + j) * D + d];
            logit[(b * L + l) * J + j] += dot;
          }
  }
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < J; ++j) {
      double q = 0.0;
      for (std::size_t d = 0; d < D; ++d) q += out.poses[(b * J + j) * D + d] * out.poses[(b * J + j) * D + d];
      out.activations[b * J + j] = std::sqrt(q);
    }
  return out;
}

inline Routed em(const Vec& votes, const Vec& acts, std::size_t B, std::size_t L, std::size_t J, std::size_t D,
                 int iters, double eps, double beta_a, double beta_u) {
  Routed out;
  out.poses.assign(B * J * D, 0.0);
  out.activations.assign(B * J, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    Vec R(L * J, 1.0 / static_cast<double>(J));
    Vec w(L * J), mass(J), mu(J * D);
    for (int it = 0; it < iters; ++it) {
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < J; ++j) w[l * J + j] = R[l * J + j] * acts[b * L + l];
      for (std::size_t j = 0; j < J; ++j) {
        mass[j] = 0.0;
        for (std::size_t l = 0; l < L; ++l) mass[j] += w[l * J + j];
        mass[j] += eps;
        for (std::size_t d = 0; d < D; ++d) {
          double s = 0.0;
          for (std::size_t l = 0; l < L; ++l) s += w[l * J + j] * votes[((b * L + l) * J + j) * D + d];
          mu[j * D + d] = s / mass[j];
        }
      }
      if (it + 1 < iters) {
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t j = 0; j < J; ++j) {
            double dist = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
              double e = votes[((b * L + l) * J + j) * D + d] - mu[j * D + d];
              dist += e * e;
            }
            R[l * J + j] = -dist;
          }
          softmax_row(&R[l * J], J);
        }
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      double cost = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        double dist = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          double e = votes[((b * L + l) * J + j) * D + d] - mu[j * D + d];
          dist += e * e;
        }
        cost += w[l * J + j] * dist;
      }
      cost /= mass[j];
      out.activations[b * J + j] = sigmoid(beta_a - beta_u * cost);
      for (std::size_t d = 0; d < D; ++d) out.poses[(b * J + j) * D + d] = mu[j * D + d];
    }
  }
  return out;
}

inline Routed vb(const Vec& votes, const Vec& acts, std::size_t B, std::size_t L, std::size_t J, std::size_t D,
                 int iters, double eps, double beta_a, double beta_u) {
  Routed out;
  out.poses.assign(B * J * D, 0.0);
  out.activations.assign(B * J, 0.0);
  out.couplings.assign(static_cast<std::size_t>(iters) + 1, Vec(B * L * J));
  for (std::size_t b = 0; b < B; ++b) {
    Vec g(L * J, 1.0 / static_cast<double>(J));
    for (std::size_t k = 0; k < L * J; ++k) out.couplings[0][b * L * J + k] = g[k];
    Vec N(J), mu(J * D), lam(J * D), elnpi(J), elndet(J);
    for (int it = 0; it < iters; ++it) {
      Vec w(L * J);
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < J; ++j) w[l * J + j] = g[l * J + j] * acts[b * L + l];
      double total = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        N[j] = eps;
        double s = 0.0;
        for (std::size_t l = 0; l < L; ++l) s += w[l * J + j];
        N[j] = s + eps;
        total += N[j];
        for (std::size_t d = 0; d < D; ++d) {
          double m = 0.0;
          for (std::size_t l = 0; l < L; ++l) m += w[l * J + j] * votes[((b * L + l) * J + j) * D + d];
          mu[j * D + d] = m / N[j];
        }
        for (std::size_t d = 0; d < D; ++d) {
          double sq = 0.0;
          for (std::size_t l = 0; l < L; ++l) {
            double e = votes[((b * L + l) * J + j) * D + d] - mu[j * D + d];
            sq += w[l * J + j] * e * e;
          }
          double p = (N[j] + 1.0) / (sq + 1.0);
          lam[j * D + d] = p < eps ? eps : p;
        }
      }
      for (std::size_t j = 0; j < J; ++j) {
        elnpi[j] = std::log(N[j] / total);
        elndet[j] = 0.0;
        for (std::size_t d = 0; d < D; ++d) elndet[j] += std::log(lam[j * D + d]);
      }
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t j = 0; j < J; ++j) {
          double quad = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            double e = votes[((b * L + l) * J + j) * D + d] - mu[j * D + d];
            quad += lam[j * D + d] * e * e;
          }
          g[l * J + j] = elnpi[j] + 0.5 * elndet[j] - 0.5 * quad;
        }
        softmax_row(&g[l * J], J);
      }
      for (std::size_t k = 0; k < L * J; ++k) out.couplings[it + 1][b * L * J + k] = g[k];
    }
    for (std::size_t j = 0; j < J; ++j) {
      out.activations[b * J + j] = sigmoid(beta_a - (beta_u + elnpi[j] + elndet[j]));
      for (std::size_t d = 0; d < D; ++d) out.poses[(b * J + j) * D + d] = mu[j * D + d];
    }
  }
  return out;
}

// poses [B, L, P, P], acts [B, L], wpose [T, J, P, P], wroute [T, P*P, J]
inline Routed self(const Vec& poses, const Vec& acts, const Vec& wpose, const Vec& wroute, std::size_t B,
                   std::size_t L, std::size_t J, std::size_t P, std::size_t T, double eps) {
  const std::size_t D = P * P;
  Routed out;
  out.poses.assign(B * J * D, 0.0);
  out.activations.assign(B * J, 0.0);
  Vec c(B * L * J);
  for (std::size_t b = 0; b < B; ++b) {
    double asum = 0.0;
    for (std::size_t l = 0; l < L; ++l) asum += acts[b * L + l];
    Vec gsum(J, 0.0), psum(J * D, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t t = l % T;
      const double* m = &poses[(b * L + l) * D];
      double* cl = &c[(b * L + l) * J];
      for (std::size_t j = 0; j < J; ++j) {
        cl[j] = 0.0;
        for (std::size_t d = 0; d < D; ++d) cl[j] += m[d] * wroute[(t * D + d) * J + j];
      }
      softmax_row(cl, J);
      for (std::size_t j = 0; j < J; ++j) {
        const double gate = cl[j] * acts[b * L + l];
        gsum[j] += gate;
        const double* w = &wpose[(t * J + j) * D];
        for (std::size_t r = 0; r < P; ++r)
          for (std::size_t col = 0; col < P; ++col) {
            double v = 0.0;
            for (std::size_t k = 0; k < P; ++k) v += m[r * P + k] * w[k * P + col];
            psum[j * D + r * P + col] += gate * v;
          }
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      out.activations[b * J + j] = gsum[j] / (asum + eps);
      for (std::size_t d = 0; d < D; ++d) out.poses[(b * J + j) * D + d] = psum[j * D + d] / (gsum[j] + eps);
    }
  }
  out.couplings.push_back(c);
  return out;
}

// Direct nested-loop cross-correlation, summing (c, kh, kw) in ascending order.
inline Vec conv2d(const Vec& x, const Vec& w, std::size_t N, std::size_t C, std::size_t H, std::size_t W,
                  std::size_t O, std::size_t K, std::size_t stride, std::size_t pad) {
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Vec out(N * O * Ho * Wo);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double s = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < K; ++kh)
              for (std::size_t kw = 0; kw < K; ++kw) {
                long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(pad);
                long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                s += x[((n * C + c) * H + ih) * W + iw] * w[((o * C + c) * K + kh) * K + kw];
              }
          out[((n * O + o) * Ho + oh) * Wo + ow] = s;
        }
  return out;
}

}  // namespace capsnet::oracle
