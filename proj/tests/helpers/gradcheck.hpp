#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nsnmt/nn.hpp"

namespace nsnmt::testing {

struct GradCheck {
  double max_rel_err = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central-difference gradient check over every entry of every parameter.
// eval(true) must run a fresh forward pass AND backward, leaving d loss /
// d theta in the parameters' grad buffers; eval(false) is forward-only and
// returns the loss value. Relative error uses max(|fd|, |analytic|, 1e-3)
// as the denominator so near-zero gradients are compared absolutely.
inline GradCheck finite_diff(const std::vector<NamedParam>& params,
                             const std::function<double(bool)>& eval, double step = 1e-5) {
  for (const NamedParam& p : params) p.tensor->zero_grad();
  eval(true);
  GradCheck r;
  for (const NamedParam& p : params) {
    Tensor& t = *p.tensor;
    for (std::size_t j = 0; j < t.data.size(); ++j) {
      const double keep = t.data[j];
      t.data[j] = keep + step;
      const double fp = eval(false);
      t.data[j] = keep - step;
      const double fm = eval(false);
      t.data[j] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = j < t.grad.size() ? t.grad[j] : 0.0;
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-3});
      const double rel = std::fabs(fd - an) / denom;
      ++r.checked;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst = p.name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return r;
}

}  // namespace nsnmt::testing
