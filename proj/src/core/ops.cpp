#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/errors.hpp"

namespace capsnet {

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> sa, sb;  // per-output-dim strides into a / b, 0 on broadcast dims
};

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = {numel(a)};
    p.sa = {1};
    p.sb = {1};
    return p;
  }
  Shape full = broadcast_shape(a, b);
  std::size_t nd = full.size();
  auto stra = row_major_strides(a);
  auto strb = row_major_strides(b);
  p.out = full;
  p.sa.assign(nd, 0);
  p.sb.assign(nd, 0);
  for (std::size_t d = 0; d < nd; ++d) {
    std::size_t off = nd - d;  // 1-based offset from the right
    if (off <= a.size()) {
      std::size_t da = a.size() - off;
      p.sa[d] = a[da] == 1 ? 0 : stra[da];
    }
    if (off <= b.size()) {
      std::size_t db = b.size() - off;
      p.sb[d] = b[db] == 1 ? 0 : strb[db];
    }
  }
  return p;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t nd = p.out.size();
  const std::size_t inner = p.out[nd - 1];
  const std::size_t sa_in = p.sa[nd - 1], sb_in = p.sb[nd - 1];
  const std::size_t outer = numel(p.out) / inner;
  std::vector<std::size_t> idx(nd, 0);
  std::size_t ia = 0, ib = 0, o = 0;
  for (std::size_t q = 0; q < outer; ++q) {
    for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * sa_in, ib + k * sb_in);
    o += inner;
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++idx[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.sa[d] * p.out[d];
      ib -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// da/db receive (a, b) and return the partial derivative of the result.
template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  Shape out_shape = a.shape() == b.shape() ? a.shape() : plan->out;
  std::vector<double> y(numel(out_shape));
  auto av = a.values(), bv = b.values();
  for_each_broadcast(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = fwd(av[ia], bv[ib]); });
  return make_result(std::move(out_shape), std::move(y), {a, b}, [a, b, plan, da, db](std::span<const double> g, std::span<const double>) {
    auto ga = grad_sink(a), gb = grad_sink(b);
    auto av = a.values(), bv = b.values();
    if (!ga.empty())
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { ga[ia] += g[o] * da(av[ia], bv[ib]); });
    if (!gb.empty())
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { gb[ib] += g[o] * db(av[ia], bv[ib]); });
  });
}

// d receives (x, y) and returns dy/dx.
template <class Fwd, class D>
Tensor unary(const Tensor& x, Fwd fwd, D d) {
  auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(y), {x}, [x, d](std::span<const double> g, std::span<const double> yv) {
    auto gx = grad_sink(x);
    auto xv = x.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * d(xv[i], yv[i]);
  });
}

double stable_logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (std::size_t off = 1; off <= nd; ++off) {
    std::size_t ea = off <= a.size() ? a[a.size() - off] : 1;
    std::size_t eb = off <= b.size() ? b[b.size() - off] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      raise(ErrorKind::dimension, "cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[nd - off] = std::max(ea, eb);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
                [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.values())
    if (v == 0.0) raise(ErrorKind::domain, "division by zero");
  return binary(a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (!(v > 0.0)) raise(ErrorKind::domain, "log of non-positive value " + std::to_string(v));
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) raise(ErrorKind::domain, "sqrt of negative value " + std::to_string(v));
  return unary(x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor logistic(const Tensor& x) {
  return unary(x, stable_logistic, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& x, double floor, std::size_t* clamped) {
  if (clamped)
    for (double v : x.values())
      if (v < floor) ++*clamped;
  return unary(x, [floor](double v) { return v < floor ? floor : v; },
               [floor](double v, double) { return v < floor ? 0.0 : 1.0; });
}

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({1}, {s}, {x}, [x](std::span<const double> g, std::span<const double>) {
    for (auto& v : grad_sink(x)) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const Shape& s = x.shape();
  if (axis >= s.size()) raise(ErrorKind::dimension, "sum axis " + std::to_string(axis) + " out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1, n = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d != axis) out_shape.push_back(s[d]);
    else if (keepdim) out_shape.push_back(1);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  auto xv = x.values();
  std::vector<double> y(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k) {
      const double* src = xv.data() + (o * n + k) * inner;
      double* dst = y.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  return make_result(std::move(out_shape), std::move(y), {x}, [x, outer, inner, n](std::span<const double> g, std::span<const double>) {
    auto gx = grad_sink(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < n; ++k) {
        double* dst = gx.data() + (o * n + k) * inner;
        const double* src = g.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel())
    raise(ErrorKind::dimension, "cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  auto xv = x.values();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x}, [x](std::span<const double> g, std::span<const double>) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Tensor gather(const Tensor& x, GatherIndex index, Shape out_shape) {
  if (!index || index->size() != numel(out_shape))
    raise(ErrorKind::dimension, "gather index does not cover output shape " + to_string(out_shape));
  auto xv = x.values();
  const auto n = static_cast<std::int64_t>(xv.size());
  std::vector<double> y(index->size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::int64_t j = (*index)[i];
    if (j >= n) raise(ErrorKind::contract, "gather index out of range");
    y[i] = j < 0 ? 0.0 : xv[static_cast<std::size_t>(j)];
  }
  return make_result(std::move(out_shape), std::move(y), {x}, [x, index](std::span<const double> g, std::span<const double>) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < index->size(); ++i) {
      std::int64_t j = (*index)[i];
      if (j >= 0) gx[static_cast<std::size_t>(j)] += g[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  if (order.size() != s.size()) raise(ErrorKind::dimension, "permutation rank does not match " + to_string(s));
  std::vector<bool> seen(s.size(), false);
  for (auto d : order) {
    if (d >= s.size() || seen[d]) raise(ErrorKind::dimension, "invalid permutation");
    seen[d] = true;
  }
  Shape out(s.size());
  for (std::size_t d = 0; d < s.size(); ++d) out[d] = s[order[d]];
  auto in_strides = row_major_strides(s);
  auto idx = std::make_shared<std::vector<std::int64_t>>(x.numel());
  std::vector<std::size_t> pos(out.size(), 0);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < out.size(); ++d) src += pos[d] * in_strides[order[d]];
    (*idx)[i] = static_cast<std::int64_t>(src);
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++pos[d] < out[d]) break;
      pos[d] = 0;
    }
  }
  return gather(x, std::move(idx), std::move(out));
}

Tensor transpose(const Tensor& x) {
  if (x.dim() != 2) raise(ErrorKind::dimension, "transpose expects a matrix, got " + to_string(x.shape()));
  return permute(x, {1, 0});
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0))
    raise(ErrorKind::dimension, "matmul of " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  auto av = a.values(), bv = b.values();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(c), {a, b}, [a, b, m, k, n](std::span<const double> g, std::span<const double>) {
    auto ga = grad_sink(a), gb = grad_sink(b);
    auto av = a.values(), bv = b.values();
    if (!ga.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* grow = g.data() + i * n;
          const double* brow = bv.data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
    if (!gb.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          const double* grow = g.data() + i * n;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) raise(ErrorKind::dimension, "softmax axis " + std::to_string(axis) + " out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1, n = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) z += (y[base + k * inner] = std::exp(xv[base + k * inner] - mx));
      for (std::size_t k = 0; k < n; ++k) y[base + k * inner] /= z;
    }
  return make_result(s, std::move(y), {x}, [x, outer, inner, n](std::span<const double> g, std::span<const double> yv) {
    auto gx = grad_sink(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * yv[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t j = base + k * inner;
          gx[j] += yv[j] * (g[j] - dot);
        }
      }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  if (input.dim() != 4 || kernel.dim() != 4)
    raise(ErrorKind::dimension, "conv2d expects 4-d input and kernel, got " + to_string(input.shape()) + " and " +
                                    to_string(kernel.shape()));
  const std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
  const std::size_t O = kernel.size(0), K = kernel.size(2);
  if (kernel.size(1) != C || kernel.size(3) != K)
    raise(ErrorKind::dimension, "conv2d kernel " + to_string(kernel.shape()) + " does not fit input " +
                                    to_string(input.shape()));
  if (stride == 0) raise(ErrorKind::configuration, "conv2d stride must be positive");
  if (K > H + 2 * padding || K > W + 2 * padding)
    raise(ErrorKind::configuration, "conv2d kernel " + std::to_string(K) + " exceeds padded input " +
                                        to_string(input.shape()));
  const std::size_t Ho = (H + 2 * padding - K) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - K) / stride + 1;
  const std::size_t rows = N * Ho * Wo, cols = C * K * K;

  auto patches = std::make_shared<std::vector<std::int64_t>>(rows * cols);
  std::size_t q = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t kh = 0; kh < K; ++kh)
            for (std::size_t kw = 0; kw < K; ++kw) {
              const auto ih = static_cast<std::int64_t>(oh * stride + kh) - static_cast<std::int64_t>(padding);
              const auto iw = static_cast<std::int64_t>(ow * stride + kw) - static_cast<std::int64_t>(padding);
              const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::int64_t>(H) && iw < static_cast<std::int64_t>(W);
              (*patches)[q++] = inside ? static_cast<std::int64_t>(((n * C + c) * H) * W) + ih * static_cast<std::int64_t>(W) + iw : -1;
            }

  auto to_nchw = std::make_shared<std::vector<std::int64_t>>(N * O * Ho * Wo);
  q = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t p = 0; p < Ho * Wo; ++p) (*to_nchw)[q++] = static_cast<std::int64_t>((n * Ho * Wo + p) * O + o);

  Tensor col = gather(input, patches, {rows, cols});
  Tensor kmat = transpose(reshape(kernel, {O, cols}));
  Tensor prod = matmul(col, kmat);
  return gather(prod, to_nchw, {N, O, Ho, Wo});
}

}  // namespace capsnet
