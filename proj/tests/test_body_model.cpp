// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "meshpose/body.hpp"
#include "meshpose/gradcheck.hpp"
#include "meshpose/ops.hpp"

using namespace meshpose;
using namespace meshpose::body;

namespace {

// Every edge of a closed surface borders exactly two faces. Checked per
// segment (faces never span segments).
bool watertight_segments(const BodyTemplate& t) {
  std::map<std::pair<int32_t, int32_t>, int> edge_count;
  for (int64_t f = 0; f < t.n_faces(); ++f) {
    const int32_t* tri = t.faces.data() + f * 3;
    if (t.vert_bone[tri[0]] != t.vert_bone[tri[1]] ||
        t.vert_bone[tri[0]] != t.vert_bone[tri[2]])
      return false;
    for (int e = 0; e < 3; ++e) {
      int32_t a = tri[e], b = tri[(e + 1) % 3];
      edge_count[{std::min(a, b), std::max(a, b)}] += 1;
    }
  }
  for (const auto& [edge, cnt] : edge_count)
    if (cnt != 2) return false;
  return true;
}

// Independent rotation oracle: v' = v cos + (k x v) sin + k (k.v)(1 - cos).
void rotate_axis_angle(const double* k3, const double* v, double* out) {
  double th = std::sqrt(k3[0] * k3[0] + k3[1] * k3[1] + k3[2] * k3[2]);
  if (th < 1e-14) {
    out[0] = v[0]; out[1] = v[1]; out[2] = v[2];
    return;
  }
  double k[3] = {k3[0] / th, k3[1] / th, k3[2] / th};
  double c = std::cos(th), s = std::sin(th);
  double kxv[3] = {k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2],
                   k[0] * v[1] - k[1] * v[0]};
  double kd = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
  for (int d = 0; d < 3; ++d) out[d] = v[d] * c + kxv[d] * s + k[d] * kd * (1 - c);
}

}  // namespace

TEST_CASE("default template: 1032 vertices, watertight, valid weights") {
  auto t = make_template();
  CHECK(t.n_verts() == 1032);  // 24 bones x (7 rings x 6 + pole)
  CHECK(t.n_faces() == 1968);
  CHECK(watertight_segments(t));
  for (int64_t i = 0; i < t.n_verts(); ++i) {
    double sum = 0;
    int nonzero = 0;
    for (int j = 0; j < kJoints; ++j) {
      float w = t.skin_w[i * kJoints + j];
      CHECK(w >= 0.0f);
      if (w != 0.0f) ++nonzero;
      sum += w;
    }
    CHECK(nonzero <= 2);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (int32_t f : t.faces) CHECK((f >= 0 && f < t.n_verts()));
}

TEST_CASE("coarse test template: 72 vertices, watertight") {
  TemplateConfig cfg;
  cfg.coarse = true;
  auto t = make_template(cfg);
  CHECK(t.n_verts() == 72);
  CHECK(t.n_faces() == 96);
  CHECK(watertight_segments(t));
}

TEST_CASE("seed changes proportions, never topology") {
  TemplateConfig a, b;
  a.seed = 1;
  b.seed = 99;
  auto ta = make_template(a), tb = make_template(b);
  CHECK(ta.faces == tb.faces);
  CHECK(ta.n_verts() == tb.n_verts());
  bool differs = false;
  for (size_t i = 0; i < ta.verts.size(); ++i)
    if (ta.verts[i] != tb.verts[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("template generation is deterministic") {
  TemplateConfig cfg;
  cfg.seed = 5;
  auto a = make_template(cfg), b = make_template(cfg);
  CHECK(a.verts == b.verts);
  CHECK(a.skin_w == b.skin_w);
  CHECK(a.shape_basis == b.shape_basis);
}

TEST_CASE("lbs: rest pose is the identity") {
  auto t = make_template();
  BodyParams p;
  auto m = lbs(t, p);
  for (int64_t i = 0; i < t.n_verts() * 3; ++i)
    CHECK(m.verts[i] == doctest::Approx(double(t.verts[i])).epsilon(1e-9));
}

TEST_CASE("lbs: beta = e_k adds exactly the k-th blendshape") {
  auto t = make_template();
  for (int k : {0, 3, 7}) {
    BodyParams p;
    p.beta[k] = 1.0;
    auto m = lbs(t, p);
    const int64_t n = t.n_verts();
    for (int64_t i = 0; i < n * 3; ++i)
      CHECK(m.verts[i] ==
            doctest::Approx(double(t.verts[i]) + double(t.shape_basis[k * n * 3 + i]))
                .epsilon(1e-9));
  }
}

TEST_CASE("lbs: pure root rotation matches the rotation oracle") {
  auto t = make_template();
  BodyParams p;
  p.theta[0] = 0.4;
  p.theta[1] = -0.8;
  p.theta[2] = 0.25;
  auto m = lbs(t, p);
  const double root[3] = {t.joints[0], t.joints[1], t.joints[2]};
  for (int64_t i = 0; i < t.n_verts(); ++i) {
    double v[3] = {double(t.verts[i * 3]) - root[0], double(t.verts[i * 3 + 1]) - root[1],
                   double(t.verts[i * 3 + 2]) - root[2]};
    double r[3];
    rotate_axis_angle(p.theta.data(), v, r);
    for (int d = 0; d < 3; ++d)
      CHECK(m.verts[i * 3 + d] == doctest::Approx(r[d] + root[d]).epsilon(1e-9));
  }
}

TEST_CASE("lbs is exactly linear in beta at fixed theta") {
  auto t = make_template();
  RngStream rng(31, "lbs_lin");
  BodyParams p0, p1, p2, pm;
  for (int i = 0; i < 72; ++i) p0.theta[i] = rng.uniform(-0.6, 0.6);
  p1.theta = p2.theta = pm.theta = p0.theta;
  const double a = 0.7, b = -1.3;
  for (int k = 0; k < kShapes; ++k) {
    p1.beta[k] = rng.uniform(-1, 1);
    p2.beta[k] = rng.uniform(-1, 1);
    pm.beta[k] = a * p1.beta[k] + b * p2.beta[k];
  }
  auto m1 = lbs(t, p1), m2 = lbs(t, p2), mm = lbs(t, pm), m0 = lbs(t, p0);
  for (int64_t i = 0; i < t.n_verts() * 3; ++i) {
    double want = a * m1.verts[i] + b * m2.verts[i] - (a + b - 1) * m0.verts[i];
    CHECK(mm.verts[i] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("lbs rejects non-finite params") {
  auto t = make_template({.coarse = true});
  BodyParams p;
  p.theta[5] = std::nan("");
  CHECK_THROWS_AS(lbs(t, p), std::runtime_error);
}

TEST_CASE("project: center, translation, scale") {
  const int64_t W = 64, H = 48;
  double v[3] = {0.0, 0.0, 1.7};
  double pt[2];
  project(v, 1, {1.0, 0.0, 0.0}, W, H, pt);
  CHECK(pt[0] == doctest::Approx((W - 1) / 2.0));
  CHECK(pt[1] == doctest::Approx((H - 1) / 2.0));

  // tx = +0.5 shifts ndc x by +0.5
  double pt2[2];
  project(v, 1, {1.0, 0.5, 0.0}, W, H, pt2);
  CHECK(pt2[0] - pt[0] == doctest::Approx(0.5 * 0.5 * (W - 1)));
  CHECK(pt2[1] == doctest::Approx(pt[1]));

  // doubling s doubles the ndc offset of off-center points
  double q[3] = {0.2, -0.1, 0.0};
  double a[2], b2[2];
  project(q, 1, {0.7, 0.0, 0.0}, W, H, a);
  project(q, 1, {1.4, 0.0, 0.0}, W, H, b2);
  double ndc_ax = a[0] / (0.5 * (W - 1)) - 1.0;
  double ndc_bx = b2[0] / (0.5 * (W - 1)) - 1.0;
  CHECK(ndc_bx == doctest::Approx(2 * ndc_ax));

  CHECK_THROWS_AS(project(v, 1, {-1.0, 0.0, 0.0}, W, H, pt), std::runtime_error);
}

TEST_CASE("project is affine in vertex x,y for fixed camera") {
  RngStream rng(33, "proj_affine");
  std::array<double, 3> cam{0.8, 0.1, -0.2};
  double va[3] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  double vb[3] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const double lam = 0.3;
  double vm[3];
  for (int d = 0; d < 3; ++d) vm[d] = lam * va[d] + (1 - lam) * vb[d];
  double pa[2], pb[2], pm[2];
  project(va, 1, cam, 32, 32, pa);
  project(vb, 1, cam, 32, 32, pb);
  project(vm, 1, cam, 32, 32, pm);
  for (int d = 0; d < 2; ++d)
    CHECK(pm[d] == doctest::Approx(lam * pa[d] + (1 - lam) * pb[d]).epsilon(1e-12));
}

TEST_CASE("lbs_op passes grad_check w.r.t. theta and beta on the 72-vertex template") {
  auto t = make_template({.coarse = true});
  RngStream rng(37, "lbs_gc");
  auto theta0 = TensorD::zeros({kJoints, 3});
  for (int64_t i = 0; i < 72; ++i) theta0.data()[i] = rng.uniform(-0.9, 0.9);
  auto beta0 = TensorD::zeros({kShapes});
  for (int64_t i = 0; i < kShapes; ++i) beta0.data()[i] = rng.uniform(-1.2, 1.2);
  auto u = TensorD::zeros({t.n_verts(), 3});
  for (int64_t i = 0; i < u.numel(); ++i) u.data()[i] = rng.uniform(-1, 1);

  auto rep_t = grad_check(
      "lbs_theta", [&](const TensorD& th) { return sum(mul(lbs_op(t, th, beta0), u)); }, theta0,
      1e-4);
  INFO(rep_t.summary());
  CHECK(rep_t.pass);
  auto rep_b = grad_check(
      "lbs_beta", [&](const TensorD& be) { return sum(mul(lbs_op(t, theta0, be), u)); }, beta0,
      1e-4);
  INFO(rep_b.summary());
  CHECK(rep_b.pass);
}

TEST_CASE("template save/load round trip is bit-exact") {
  auto t = make_template({.coarse = true, .seed = 11});
  const char* path = "tmp_template_test.bin";
  save_template(t, path);
  auto t2 = load_template(path);
  CHECK(t.verts == t2.verts);
  CHECK(t.faces == t2.faces);
  CHECK(t.joints == t2.joints);
  CHECK(t.parents == t2.parents);
  CHECK(t.skin_w == t2.skin_w);
  CHECK(t.shape_basis == t2.shape_basis);
  CHECK(t.joint_basis == t2.joint_basis);
  CHECK(t.vert_t == t2.vert_t);
  // saving again produces identical bytes
  save_template(t2, "tmp_template_test2.bin");
  std::ifstream f1(path, std::ios::binary), f2("tmp_template_test2.bin", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path);
  std::remove("tmp_template_test2.bin");
}
