#pragma once

#include <cmath>
#include <functional>

#include "carigen/autodiff.hpp"
#include "carigen/tensor.hpp"

namespace carigen::testutil {

/// Central finite differences of a scalar function of one tensor.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& x,
                               double eps = 1e-6) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = fn(probe);
    probe[i] = orig - eps;
    const double fm = fn(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Relative error between analytic and finite-difference gradients:
/// max |a - f| / (max |f| + tiny). Scale-free and robust near zeros.
inline double grad_rel_error(const Tensor& analytic, const Tensor& fd) {
  double max_diff = 0.0, max_ref = 0.0;
  for (std::int64_t i = 0; i < analytic.numel(); ++i) {
    max_diff = std::max(max_diff, std::abs(analytic[i] - fd[i]));
    max_ref = std::max(max_ref, std::abs(fd[i]));
  }
  return max_diff / (max_ref + 1e-12);
}

/// Builds the graph via `build` on a leaf made from `x`, runs backward, and
/// compares the leaf gradient against central differences of the same build.
inline double check_gradient(const std::function<carigen::ad::Var(const carigen::ad::Var&)>& build,
                             const Tensor& x, double eps = 1e-6) {
  using carigen::ad::Var;
  Var leaf = Var::leaf(x, /*requires_grad=*/true);
  Var loss = build(leaf);
  carigen::ad::backward(loss);
  Tensor analytic = leaf.grad();
  Tensor fd = finite_diff_grad(
      [&](const Tensor& probe) {
        Var l = Var::leaf(probe, false);
        return build(l).item();
      },
      x, eps);
  return grad_rel_error(analytic, fd);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

}  // namespace carigen::testutil
