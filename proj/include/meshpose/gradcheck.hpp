// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "meshpose/ops.hpp"
#include "meshpose/rng.hpp"

// Finite-difference verification of tape gradients. Always run in f64: the
// central difference with h=1e-5 then carries ~1e-10 truncation error, far
// below the 1e-4 acceptance tolerance.

namespace meshpose {

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  int64_t checked = 0;
  std::vector<int64_t> excluded;  // coordinates skipped as non-differentiable
  bool pass = false;

  std::string summary() const {
    std::string s = name + ": max_rel_err=" + std::to_string(max_rel_err) +
                    " tol=" + std::to_string(tol) + " checked=" + std::to_string(checked);
    if (!excluded.empty()) s += " excluded=" + std::to_string(excluded.size());
    s += pass ? " PASS" : " FAIL";
    return s;
  }
};

namespace detail {

inline double rel_err(double a, double b) {
  double denom = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

// A coordinate sits on a kink when the one-sided slopes disagree strongly;
// relu at 0 is the canonical case.
inline bool is_kink(double left, double right) {
  double denom = std::max({1.0, std::fabs(left), std::fabs(right)});
  return std::fabs(left - right) / denom > 1e-3;
}

}  // namespace detail

// Checks d loss / d x for fn: Tensor -> scalar Tensor at every coordinate of
// x0 (fn must be pure and deterministic). Non-differentiable coordinates are
// detected from one-sided differences, reported, and excluded from the
// verdict.
template <typename F>
GradCheckReport grad_check(const std::string& name, F&& fn, const Tensor<double>& x0, double tol,
                           double h = 1e-5) {
  GradCheckReport rep;
  rep.name = name;
  rep.tol = tol;

  Tensor<double> x = x0.clone();
  x.set_requires_grad(true);
  Tensor<double> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> loss = fn(x);
    check(loss.numel() == 1, "grad_check " + name + ": fn must return a scalar");
    check(std::isfinite(loss.item()), "grad_check " + name + ": non-finite output");
    tape.backward(loss);
    analytic = tape.grad_of(x);
  }

  Tensor<double> xe = x.detach();
  auto eval = [&](int64_t idx, double delta) {
    double old = xe.data()[idx];
    xe.data()[idx] = old + delta;
    double v = fn(xe).item();
    xe.data()[idx] = old;
    check(std::isfinite(v), "grad_check " + name + ": non-finite output during probing");
    return v;
  };

  const double f0 = fn(xe).item();
  for (int64_t i = 0; i < x0.numel(); ++i) {
    double fp = eval(i, h);
    double fm = eval(i, -h);
    double num = (fp - fm) / (2.0 * h);
    double err = detail::rel_err(analytic.data()[i], num);
    if (err > tol) {
      double left = (f0 - fm) / h;
      double right = (fp - f0) / h;
      if (detail::is_kink(left, right)) {
        rep.excluded.push_back(i);
        continue;
      }
    }
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    ++rep.checked;
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

// Parameter-level check for whole modules: one analytic backward, then
// `samples` randomly chosen coordinates per parameter probed numerically.
// `forward` must rebuild the graph from the current parameter buffers. The
// probe step is smaller than the per-op default: deep ReLU stacks flip
// activation signs inside a +-1e-5 window often enough to pollute the
// difference quotient.
inline GradCheckReport grad_check_params(
    const std::string& name, const std::function<Tensor<double>()>& forward,
    const std::vector<Tensor<double>*>& params, double tol, int samples, RngStream& rng,
    double h = 1e-6) {
  GradCheckReport rep;
  rep.name = name;
  rep.tol = tol;

  std::vector<Tensor<double>> analytic;
  {
    for (auto* p : params) p->set_requires_grad(true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> loss = forward();
    check(std::isfinite(loss.item()), "grad_check_params " + name + ": non-finite loss");
    tape.backward(loss);
    for (auto* p : params) analytic.push_back(tape.grad_of(*p));
  }
  for (auto* p : params) p->set_requires_grad(false);

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = *params[pi];
    for (int s = 0; s < samples && s < p.numel(); ++s) {
      int64_t idx = static_cast<int64_t>(rng.uniform_index(p.numel()));
      double old = p.data()[idx];
      p.data()[idx] = old + h;
      double fp = forward().item();
      p.data()[idx] = old - h;
      double fm = forward().item();
      p.data()[idx] = old;
      double num = (fp - fm) / (2.0 * h);
      double err = detail::rel_err(analytic[pi].data()[idx], num);
      rep.max_rel_err = std::max(rep.max_rel_err, err);
      ++rep.checked;
    }
  }
  for (auto* p : params) p->set_requires_grad(true);
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace meshpose
