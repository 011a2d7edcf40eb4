#include "harness/selftest.hpp"

#include <cmath>
#include <random>

#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "diagnostics/ledger.hpp"
#include "harness/loss.hpp"
#include "harness/optimizer.hpp"
#include "routing/routing.hpp"

namespace capsnet {

namespace {

Tensor rand_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

RoutingConfig cfg_for(Algorithm a, int iters) {
  RoutingConfig c;
  c.algorithm = a;
  c.iterations = iters;
  return c;
}

SelftestCheck from_gradcheck(std::string name, const GradCheckResult& r) {
  return {std::move(name), r.passed,
          "max rel error " + std::to_string(r.max_rel_error) + " over " + std::to_string(r.entries_checked) +
              " entries" + (r.passed ? "" : "; worst " + r.worst)};
}

// Dynamic routing written as plain loops. votes [L, J, D], one batch element.
std::vector<double> dynamic_reference(const std::vector<double>& votes, std::size_t L, std::size_t J, std::size_t D,
                                      int iters) {
  std::vector<double> logit(L * J, 0.0), v(J * D, 0.0);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<double> s(D, 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        double m = logit[l * J];
        for (std::size_t k = 1; k < J; ++k) m = std::max(m, logit[l * J + k]);
        double z = 0.0;
        for (std::size_t k = 0; k < J; ++k) z += std::exp(logit[l * J + k] - m);
        const double c = std::exp(logit[l * J + j] - m) / z;
        for (std::size_t d = 0; d < D; ++d) s[d] += c * votes[(l * J + j) * D + d];
      }
      double q = 0.0;
      for (double x : s) q += x * x;
      const double f = q / ((1.0 + q) * std::sqrt(q + 1e-8));
      for (std::size_t d = 0; d < D; ++d) v[j * D + d] = s[d] * f;
    }
    if (it + 1 < iters)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t d = 0; d < D; ++d) logit[l * J + j] += votes[(l * J + j) * D + d] * v[j * D + d];
  }
  return v;
}

SelftestCheck check_ops_gradients() {
  std::mt19937_64 rng(101);
  Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng), c = rand_tensor({2}, rng, 0.5, 1.5);
  Tensor img = rand_tensor({1, 2, 5, 5}, rng), k = rand_tensor({3, 2, 3, 3}, rng);
  auto loss = [&] {
    Tensor h = tanh(matmul(a, b)) / c;
    Tensor s = softmax(h, 1) * logistic(h);
    Tensor conv = conv2d(img, k, 2, 1);
    return sum(s) + mean(square(conv)) + sum(log(add_scalar(exp(sum_axis(h, 0)), 1.0)));
  };
  return from_gradcheck("tensor op gradients", check_gradients(loss, {a, b, c, img, k}));
}

std::vector<SelftestCheck> check_routing_gradients() {
  std::mt19937_64 rng(102);
  Tensor votes = rand_tensor({2, 4, 3, 2, 2}, rng), acts = rand_tensor({2, 4}, rng, 0.1, 0.9);
  Tensor ba = Tensor::scalar(0.4), bu = Tensor::scalar(0.8);
  Tensor gp = rand_tensor({2, 3, 2, 2}, rng), ga = rand_tensor({2, 3}, rng);
  auto loss = [&](const RoutingOutput& o) { return sum(o.poses * gp) + sum(o.activations * ga); };
  Tensor poses = rand_tensor({2, 4, 2, 2}, rng);
  SelfRoutingParams p{rand_tensor({2, 3, 2, 2}, rng), rand_tensor({2, 4, 3}, rng)};
  return {
      from_gradcheck("dynamic routing gradients (r=2)",
                     check_gradients([&] { return loss(dynamic_route({votes, acts}, cfg_for(Algorithm::dynamic, 2))); },
                                     {votes})),
      from_gradcheck("em routing gradients (r=2)",
                     check_gradients([&] { return loss(em_route({votes, acts}, cfg_for(Algorithm::em, 2), {ba, bu})); },
                                     {votes, acts, ba, bu})),
      from_gradcheck("vb routing gradients (r=2)",
                     check_gradients([&] { return loss(vb_route({votes, acts}, cfg_for(Algorithm::vb, 2), {ba, bu})); },
                                     {votes, acts, ba, bu})),
      from_gradcheck("self routing gradients",
                     check_gradients(
                         [&] { return loss(self_route(poses, acts, p, cfg_for(Algorithm::self_routing, 1))); },
                         {poses, acts, p.pose_weights, p.route_weights})),
  };
}

SelftestCheck check_dynamic_oracle() {
  std::mt19937_64 rng(103);
  const std::size_t L = 4, J = 3, P = 2, D = P * P;
  Tensor votes = rand_tensor({1, L, J, P, P}, rng, -2, 2);
  auto out = dynamic_route({votes, Tensor({1, L}, 1.0)}, cfg_for(Algorithm::dynamic, 3));
  auto ref = dynamic_reference({votes.values().begin(), votes.values().end()}, L, J, D, 3);
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - out.poses.at(i)));
  return {"dynamic routing vs reference loops", worst <= 1e-10, "max abs diff " + std::to_string(worst)};
}

SelftestCheck check_normalization() {
  std::mt19937_64 rng(104);
  std::string bad;
  auto rows_sum_to_one = [&](const Tensor& c, const char* what) {
    const std::size_t J = c.shape().back();
    for (std::size_t r = 0; r < c.numel() / J; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < J; ++j) s += c.at(r * J + j);
      if (std::abs(s - 1.0) > 1e-12 && bad.empty()) bad = std::string(what) + " coupling row sums to " + std::to_string(s);
    }
  };
  auto in_unit = [&](const Tensor& a, const char* what) {
    for (double v : a.values())
      if (!(v >= 0.0 && v <= 1.0) && bad.empty()) bad = std::string(what) + " activation " + std::to_string(v);
  };
  for (int trial = 0; trial < 100 && bad.empty(); ++trial) {
    const std::size_t B = 1 + rng() % 2, L = 1 + rng() % 4, J = 1 + rng() % 3, P = 1 + rng() % 3;
    VoteField f{rand_tensor({B, L, J, P, P}, rng, -3, 3), rand_tensor({B, L}, rng, 0, 1)};
    auto d = dynamic_route(f, cfg_for(Algorithm::dynamic, 2));
    for (const auto& c : d.state.couplings) rows_sum_to_one(c, "dynamic");
    in_unit(d.activations, "dynamic");
    auto e = em_route(f, cfg_for(Algorithm::em, 2), {Tensor::scalar(0.5), Tensor::scalar(1.0)});
    for (const auto& c : e.state.couplings) rows_sum_to_one(c, "em");
    in_unit(e.activations, "em");
    auto v = vb_route(f, cfg_for(Algorithm::vb, 2), {Tensor::scalar(1.0), Tensor::scalar(0.0)});
    for (double g : v.state.couplings.front().values())
      if (g != 1.0 / static_cast<double>(J) && bad.empty()) bad = "vb initial responsibility " + std::to_string(g);
    for (const auto& c : v.state.couplings) rows_sum_to_one(c, "vb");
    in_unit(v.activations, "vb");
    SelfRoutingParams p{rand_tensor({L, J, P, P}, rng), rand_tensor({L, P * P, J}, rng)};
    auto s = self_route(rand_tensor({B, L, P, P}, rng), f.lower_activations, p, cfg_for(Algorithm::self_routing, 1));
    rows_sum_to_one(s.state.couplings.front(), "self");
    in_unit(s.activations, "self");
  }
  return {"normalization invariants (100 fixtures)", bad.empty(), bad.empty() ? "ok" : bad};
}

SelftestCheck check_spread_loss() {
  const double tie = spread_loss(Tensor({1, 4}, 0.5), {2}, 0.2).item();
  const double sep = spread_loss(Tensor({1, 3}, {0.0, 1.0, 0.0}), {1}, 0.9).item();
  std::mt19937_64 rng(105);
  Tensor a = rand_tensor({3, 4}, rng, 0, 1);
  auto g = check_gradients([&] { return spread_loss(a, {0, 3, 1}, 0.6); }, {a});
  const bool ok = std::abs(tie - 0.12) < 1e-15 && sep == 0.0 && g.passed;
  return {"spread loss values and gradient", ok,
          "tie " + std::to_string(tie) + ", separated " + std::to_string(sep) + ", fd rel error " +
              std::to_string(g.max_rel_error)};
}

SelftestCheck check_dead_boundary() {
  ActivationLedger ledger;
  ledger.register_layer(0, LayerKind::conv_caps, 3);
  ledger.observe_batch(0, Tensor({2, 3}, {0.01, 0.0, 0.5, 0.01, 0.0202, 0.5}));
  const auto r = ledger.finalize(0.01);
  const auto& c = r.layers.at(0).capsules;
  const bool ok = c[0].dead && !c[1].dead && !c[2].dead && r.layers[0].dead_count == 1 &&
                  c[0].mean_activation == 0.01;
  return {"dead capsule boundary is inclusive", ok, "A = " + std::to_string(c[0].mean_activation)};
}

SelftestCheck check_adam_zero_grad() {
  Tensor w({3}, {1.0, -2.0, 3.0});
  w.requires_grad_();
  Adam opt({w});
  opt.step();
  opt.step();
  const bool ok = w.at(0) == 1.0 && w.at(1) == -2.0 && w.at(2) == 3.0;
  return {"optimizer step with zero gradient", ok, ok ? "parameters unchanged" : "parameters moved"};
}

}  // namespace

std::vector<SelftestCheck> run_selftest() {
  std::vector<SelftestCheck> out;
  auto guarded = [&](const char* name, auto fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("tensor op gradients", [&] { out.push_back(check_ops_gradients()); });
  guarded("routing gradients", [&] {
    for (auto& c : check_routing_gradients()) out.push_back(std::move(c));
  });
  guarded("dynamic routing vs reference loops", [&] { out.push_back(check_dynamic_oracle()); });
  guarded("normalization invariants", [&] { out.push_back(check_normalization()); });
  guarded("spread loss", [&] { out.push_back(check_spread_loss()); });
  guarded("dead capsule boundary", [&] { out.push_back(check_dead_boundary()); });
  guarded("optimizer zero gradient", [&] { out.push_back(check_adam_zero_grad()); });
  return out;
}

}  // namespace capsnet
