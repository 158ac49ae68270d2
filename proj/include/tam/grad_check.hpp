#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tam/params.hpp"
#include "tam/tensor.hpp"

namespace tam {

struct GradCheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  std::string worst;         // "<param>[<flat index>]" of the worst coordinate
  std::size_t checked = 0;
  std::vector<std::string> failures;
};

// Compares reverse-mode gradients against central finite differences in
// double precision. `loss_fn` must rebuild the graph from the current
// parameter values on every call. rel = |a - n| / max(1, |a|, |n|); any
// non-finite analytic or numeric value is a failure.
inline GradCheckResult grad_check(ParamRegistry<double>& params,
                                  const std::function<TensorPtr<double>()>& loss_fn,
                                  double h = 1e-3, double tol = 1e-4,
                                  std::size_t max_failures = 8) {
  GradCheckResult res;

  params.zero_grad();
  auto loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) analytic[i] = params.tensors()[i]->grad;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params.tensors()[i];
    const std::string& name = params.names()[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double orig = p.data[j];
      double fp, fm;
      {
        NoGradGuard ng;
        p.data[j] = orig + h;
        fp = loss_fn()->item();
        p.data[j] = orig - h;
        fm = loss_fn()->item();
        p.data[j] = orig;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][j];
      const std::string where = name + "[" + std::to_string(j) + "]";
      ++res.checked;
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        res.ok = false;
        if (res.failures.size() < max_failures)
          res.failures.push_back(where + ": non-finite (analytic=" + std::to_string(a) +
                                 " numeric=" + std::to_string(numeric) + ")");
        continue;
      }
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = where;
      }
      if (rel > tol) {
        res.ok = false;
        if (res.failures.size() < max_failures) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s: analytic=%.10g numeric=%.10g rel=%.3g",
                        where.c_str(), a, numeric, rel);
          res.failures.push_back(buf);
        }
      }
    }
  }
  return res;
}

}  // namespace tam
