// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "meshpose/tensor.hpp"

namespace meshpose::metrics {

// Windowed SSIM: 11x11 Gaussian (sigma 1.5), k1=0.01, k2=0.03, L=1, valid
// windows only, averaged over channels. Inputs are [C,H,W] in [0,1].
double ssim(const Tensor<float>& a, const Tensor<float>& b);

// mean |a-b|
double l1(const Tensor<float>& a, const Tensor<float>& b);

// (-1,1) -> [0,1] clamp-free range map used before metrics and PNG export.
Tensor<float> to_unit_range(const Tensor<float>& img);

}  // namespace meshpose::metrics
