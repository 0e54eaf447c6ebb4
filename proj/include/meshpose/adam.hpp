// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "meshpose/tensor.hpp"

namespace meshpose {

// Adam with bias correction. The paper names the optimizer but not its
// internals; beta/eps follow the original defaults.
template <typename T>
struct AdamState {
  struct Moments {
    Tensor<T> m, v;
  };
  std::map<std::string, Moments> moments;
  int64_t step = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

// One update over a parameter group; grads[i] pairs with params[i]. The step
// counter is shared by the group (a fresh moment buffer starts at zero, so a
// zero gradient leaves its parameter untouched).
template <typename T>
void adam_step(AdamState<T>& st, const NamedParams<T>& params,
               const std::vector<Tensor<T>>& grads, T lr) {
  check(lr > T(0), "adam_step: lr must be positive");
  check(params.size() == grads.size(), "adam_step: params/grads size mismatch");
  st.step += 1;
  const T b1t = T(1) - static_cast<T>(std::pow(static_cast<double>(st.beta1), double(st.step)));
  const T b2t = T(1) - static_cast<T>(std::pow(static_cast<double>(st.beta2), double(st.step)));
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params[i].first;
    Tensor<T>& p = *params[i].second;
    const Tensor<T>& g = grads[i];
    check(g.shape() == p.shape(),
          "adam_step: grad shape mismatch for " + name + ": " + shape_str(g.shape()) + " vs " +
              shape_str(p.shape()));
    auto& mo = st.moments[name];
    if (!mo.m.defined()) {
      mo.m = Tensor<T>::zeros(p.shape());
      mo.v = Tensor<T>::zeros(p.shape());
    }
    T* pd = p.data();
    T* md = mo.m.data();
    T* vd = mo.v.data();
    const T* gd = g.data();
    for (int64_t j = 0; j < p.numel(); ++j) {
      if (!std::isfinite(static_cast<double>(gd[j])))
        fail("adam_step: non-finite gradient in parameter " + name);
      md[j] = st.beta1 * md[j] + (T(1) - st.beta1) * gd[j];
      vd[j] = st.beta2 * vd[j] + (T(1) - st.beta2) * gd[j] * gd[j];
      const T mhat = md[j] / b1t;
      const T vhat = vd[j] / b2t;
      pd[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace meshpose
