#pragma once

// Central finite-difference checker for ParamStore-backed losses. Test-only.

#include "tfcodit/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace tfcodit::testing {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0.0;

  double pass_fraction() const { return checked == 0 ? 1.0 : double(passed) / double(checked); }
};

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for every trainable scalar.
/// `loss` must build a fresh graph and return a 1x1 Var.
inline GradCheckResult grad_check(ag::ParamStore& store,
                                  const std::function<ag::Var(ag::Graph&)>& loss,
                                  double tolerance = 1e-4, double step = 1e-5,
                                  std::size_t max_per_param = 0) {
  store.zero_grad();
  {
    ag::Graph g;
    ag::Var l = loss(g);
    g.backward(l);
  }
  GradCheckResult res;
  for (ag::Parameter* p : store.all()) {
    if (!p->trainable) continue;
    const Eigen::Index n = p->value.size();
    const Eigen::Index stride =
        max_per_param == 0 ? 1 : std::max<Eigen::Index>(1, n / Eigen::Index(max_per_param));
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + step;
      double up;
      {
        ag::Graph g;
        up = loss(g).value()(0, 0);
      }
      x = saved - step;
      double down;
      {
        ag::Graph g;
        down = loss(g).value()(0, 0);
      }
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double err = relative_error(p->grad.data()[i], numeric);
      ++res.checked;
      if (err < tolerance) ++res.passed;
      res.worst = std::max(res.worst, err);
    }
  }
  return res;
}

}  // namespace tfcodit::testing
