// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace meshpose::gradsuite {

struct SuiteResult {
  std::string name;
  bool pass = false;
  double max_err = 0.0;
  double tol = 0.0;
};

// Finite-difference audits of every differentiable operation, run in f64 on
// the 72-vertex test template at 16x16, plus the rasterizer adjoint identity.
// Tolerance is 1e-4 relative error unless stated in the result.
std::vector<SuiteResult> run_all();

bool all_pass(const std::vector<SuiteResult>& results);

}  // namespace meshpose::gradsuite
