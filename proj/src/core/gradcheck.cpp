#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/errors.hpp"

namespace capsnet {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                const GradCheckOptions& opts) {
  for (auto& p : params) {
    p.requires_grad_(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }

  GradCheckResult result;
  NoGradScope no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto vals = p.mutable_values();
    std::size_t limit = opts.max_entries ? std::min(opts.max_entries, vals.size()) : vals.size();
    // Spread the checked entries across the whole tensor when limited.
    std::size_t stride = std::max<std::size_t>(1, vals.size() / limit);
    for (std::size_t e = 0, checked = 0; e < vals.size() && checked < limit; e += stride, ++checked) {
      const double orig = vals[e];
      vals[e] = orig + opts.step;
      const double up = loss_fn().item();
      vals[e] = orig - opts.step;
      const double down = loss_fn().item();
      vals[e] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double err = relative_error(analytic[e], numeric, opts.abs_floor);
      ++result.entries_checked;
      if (err > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) {
          std::ostringstream os;
          os << "param " << pi << "[" << e << "]: tape=" << analytic[e] << " fd=" << numeric;
          result.worst = os.str();
        }
      }
    }
  }
  result.passed = result.max_rel_error < opts.tolerance;
  return result;
}

}  // namespace capsnet
