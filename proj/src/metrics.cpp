// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/metrics.hpp"

#include <cmath>
#include <vector>

namespace meshpose::metrics {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(kWin);
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      v[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return k;
}

// separable valid-mode filter: [H,W] -> [H-10, W-10]
std::vector<double> filter_valid(const std::vector<double>& img, int64_t h, int64_t w) {
  const auto& k = gaussian_kernel();
  const int64_t oh = h - kWin + 1, ow = w - kWin + 1;
  std::vector<double> tmp(h * ow);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += k[i] * img[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  check(a.shape() == b.shape(), "ssim: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  check(a.rank() == 3, "ssim: want [C,H,W]");
  const int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  check(h >= kWin && w >= kWin, "ssim: image smaller than the 11x11 window");

  double total = 0;
  const int64_t hw = h * w;
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
    for (int64_t i = 0; i < hw; ++i) {
      x[i] = a.data()[ch * hw + i];
      y[i] = b.data()[ch * hw + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mx = filter_valid(x, h, w);
    auto my = filter_valid(y, h, w);
    auto mxx = filter_valid(xx, h, w);
    auto myy = filter_valid(yy, h, w);
    auto mxy = filter_valid(xy, h, w);
    double acc = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      const double num = (2 * mx[i] * my[i] + kC1) * (2 * cxy + kC2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
      acc += num / den;
    }
    total += acc / double(mx.size());
  }
  return total / double(c);
}

double l1(const Tensor<float>& a, const Tensor<float>& b) {
  check(a.shape() == b.shape(), "l1: shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    s += std::fabs(double(a.data()[i]) - double(b.data()[i]));
  return s / double(a.numel());
}

Tensor<float> to_unit_range(const Tensor<float>& img) {
  auto out = Tensor<float>::zeros(img.shape());
  for (int64_t i = 0; i < img.numel(); ++i)
    out.data()[i] = (img.data()[i] + 1.0f) * 0.5f;
  return out;
}

}  // namespace meshpose::metrics
