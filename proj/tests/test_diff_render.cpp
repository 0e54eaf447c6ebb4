// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "meshpose/raster.hpp"
#include "meshpose/rng.hpp"

using namespace meshpose;
using namespace meshpose::raster;

namespace {

// Synthetic flat "mesh" pinned in projected space: verts placed so that
// project() with cam=(1,0,0) lands them on chosen pixel coordinates.
struct FlatMesh {
  body::BodyTemplate tmpl;
  body::BodyMesh mesh;
};

// pixel-space (x,y,z) triples -> a BodyMesh whose projection hits (x,y)
FlatMesh flat_mesh(const std::vector<std::array<double, 3>>& pix_pts,
                   const std::vector<int32_t>& faces, int64_t w, int64_t h) {
  FlatMesh fm;
  fm.tmpl.faces = faces;
  fm.mesh.tmpl = &fm.tmpl;
  for (const auto& p : pix_pts) {
    const double ndc_x = 2.0 * p[0] / double(w - 1) - 1.0;
    const double ndc_y = 2.0 * p[1] / double(h - 1) - 1.0;
    fm.mesh.verts.push_back(ndc_x);
    fm.mesh.verts.push_back(ndc_y);
    fm.mesh.verts.push_back(p[2]);
    fm.mesh.verts_rel.push_back(ndc_x);
    fm.mesh.verts_rel.push_back(ndc_y);
    fm.mesh.verts_rel.push_back(p[2]);
  }
  return fm;
}

const std::array<double, 3> kCam{1.0, 0.0, 0.0};

// Independent same-side point-in-triangle test for the oracle.
bool point_in_tri(double px, double py, const double* a, const double* b, const double* c) {
  auto side = [&](const double* p, const double* q) {
    return (q[0] - p[0]) * (py - p[1]) - (q[1] - p[1]) * (px - p[0]);
  };
  double d0 = side(a, b), d1 = side(b, c), d2 = side(c, a);
  bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
  bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
  return !(has_neg && has_pos);
}

// 16x supersampled coverage: pixel covered iff at least half the subsamples
// fall inside some triangle.
std::vector<uint8_t> supersampled_coverage(const std::vector<double>& pts,
                                           const std::vector<int32_t>& faces, int64_t h,
                                           int64_t w) {
  std::vector<uint8_t> cov(h * w, 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      int inside = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const double px = x - 0.5 + (sx + 0.5) / 4.0;
          const double py = y - 0.5 + (sy + 0.5) / 4.0;
          bool hit = false;
          for (size_t f = 0; f < faces.size() / 3 && !hit; ++f) {
            const double* a = pts.data() + faces[f * 3] * 2;
            const double* b = pts.data() + faces[f * 3 + 1] * 2;
            const double* c = pts.data() + faces[f * 3 + 2] * 2;
            double area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if (std::fabs(area) < 1e-12) continue;
            hit = point_in_tri(px, py, a, b, c);
          }
          inside += hit ? 1 : 0;
        }
      cov[y * w + x] = inside >= 8 ? 1 : 0;
    }
  return cov;
}

}  // namespace

TEST_CASE("background pixels read zero feature and face id -1") {
  auto fm = flat_mesh({{2, 2, 0}, {5, 2, 0}, {3.5, 5, 0}}, {0, 1, 2}, 16, 16);
  auto x = TensorD::from_data({3, 1}, {1.0, 1.0, 1.0});
  Geometry geom;
  auto out = rasterize(x, fm.mesh, kCam, 16, 16, &geom);
  CHECK(geom.face_id[0] == -1);
  CHECK(out.data()[0] == 0.0);
  CHECK(geom.coverage[0] == 0);
  // a pixel well inside
  CHECK(geom.face_id[3 * 16 + 3] == 0);
  CHECK(out.data()[3 * 16 + 3] == doctest::Approx(1.0));
}

TEST_CASE("unit features recover barycentric weights at covered pixels") {
  // triangle with identity features e1,e2,e3; output channel k = lambda_k
  auto fm = flat_mesh({{1, 1, 0}, {9, 2, 0}, {4, 8, 0}}, {0, 1, 2}, 12, 12);
  auto x = TensorD::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Geometry geom;
  auto out = rasterize(x, fm.mesh, kCam, 12, 12, &geom);
  // closed-form barycentric via the 2x2 linear system, independent route
  const double ax = 1, ay = 1, bx = 9, by = 2, cx = 4, cy = 8;
  for (int64_t py = 0; py < 12; ++py)
    for (int64_t px = 0; px < 12; ++px) {
      const int64_t pix = py * 12 + px;
      if (!geom.coverage[pix]) continue;
      const double d = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy);
      const double l0 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / d;
      const double l1 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / d;
      const double l2 = 1 - l0 - l1;
      CHECK(out.data()[0 * 144 + pix] == doctest::Approx(l0).epsilon(1e-9));
      CHECK(out.data()[1 * 144 + pix] == doctest::Approx(l1).epsilon(1e-9));
      CHECK(out.data()[2 * 144 + pix] == doctest::Approx(l2).epsilon(1e-9));
      CHECK(geom.bary[pix * 3] >= 0.0);
      CHECK(geom.bary[pix * 3] + geom.bary[pix * 3 + 1] + geom.bary[pix * 3 + 2] ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("z-buffer: nearer triangle wins, ties keep the lower face index") {
  // two stacked triangles over the same pixels; face 1 nearer (smaller z)
  auto fm = flat_mesh({{1, 1, 5}, {9, 1, 5}, {5, 9, 5}, {1, 1, 2}, {9, 1, 2}, {5, 9, 2}},
                      {0, 1, 2, 3, 4, 5}, 12, 12);
  auto x = TensorD::from_data({6, 1}, {9, 9, 9, 5, 5, 5});
  Geometry geom;
  auto out = rasterize(x, fm.mesh, kCam, 12, 12, &geom);
  int covered = 0;
  for (int64_t pix = 0; pix < 144; ++pix)
    if (geom.coverage[pix]) {
      ++covered;
      CHECK(geom.face_id[pix] == 1);
      CHECK(out.data()[pix] == doctest::Approx(5.0));
    }
  CHECK(covered > 10);

  // exact tie in depth -> face 0 kept
  auto fm2 = flat_mesh({{1, 1, 2}, {9, 1, 2}, {5, 9, 2}, {1, 1, 2}, {9, 1, 2}, {5, 9, 2}},
                       {0, 1, 2, 3, 4, 5}, 12, 12);
  Geometry g2 = rasterize_geometry(fm2.mesh, kCam, 12, 12);
  for (int64_t pix = 0; pix < 144; ++pix)
    if (g2.coverage[pix]) CHECK(g2.face_id[pix] == 0);
}

TEST_CASE("degenerate triangles are skipped; all-degenerate mesh renders background") {
  auto fm = flat_mesh({{2, 2, 0}, {8, 8, 0}, {5, 5, 0}}, {0, 1, 2}, 12, 12);  // collinear
  auto x = TensorD::from_data({3, 1}, {1, 1, 1});
  Geometry geom;
  auto out = rasterize(x, fm.mesh, kCam, 12, 12, &geom);
  for (int64_t pix = 0; pix < 144; ++pix) {
    CHECK(geom.coverage[pix] == 0);
    CHECK(out.data()[pix] == 0.0);
  }
}

TEST_CASE("linearity in features and exact constant interpolation") {
  RngStream rng(41, "raster_lin");
  auto t = body::make_template({.coarse = true});
  body::BodyParams p;
  for (int i = 0; i < 72; ++i) p.theta[i] = rng.uniform(-0.5, 0.5);
  p.cam = {0.8, 0.0, 0.0};
  auto mesh = body::lbs(t, p);

  auto X = TensorD::zeros({t.n_verts(), 4});
  auto Y = TensorD::zeros({t.n_verts(), 4});
  for (int64_t i = 0; i < X.numel(); ++i) {
    X.data()[i] = rng.uniform(-1, 1);
    Y.data()[i] = rng.uniform(-1, 1);
  }
  const double a = 0.6, b = -1.1;
  auto M = TensorD::zeros({t.n_verts(), 4});
  for (int64_t i = 0; i < M.numel(); ++i) M.data()[i] = a * X.data()[i] + b * Y.data()[i];
  auto rx = rasterize(X, mesh, p.cam, 24, 24);
  auto ry = rasterize(Y, mesh, p.cam, 24, 24);
  auto rm = rasterize(M, mesh, p.cam, 24, 24);
  for (int64_t i = 0; i < rm.numel(); ++i)
    CHECK(rm.data()[i] == doctest::Approx(a * rx.data()[i] + b * ry.data()[i]).epsilon(1e-9));

  // constant features come through exactly in f32
  auto Cf = TensorF::full({t.n_verts(), 2}, 3.25f);
  body::BodyMesh meshf = mesh;
  Geometry geom;
  auto rc = rasterize(Cf, meshf, p.cam, 24, 24, &geom);
  for (int64_t pix = 0; pix < 24 * 24; ++pix)
    if (geom.coverage[pix]) {
      CHECK(rc.data()[pix] == 3.25f);
      CHECK(rc.data()[24 * 24 + pix] == 3.25f);
    }
}

TEST_CASE("backward is the exact adjoint of the forward") {
  RngStream rng(43, "raster_adj");
  auto t = body::make_template({.coarse = true});
  for (int trial = 0; trial < 3; ++trial) {
    body::BodyParams p;
    for (int i = 0; i < 72; ++i) p.theta[i] = rng.uniform(-0.8, 0.8);
    p.cam = {0.75, rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    auto mesh = body::lbs(t, p);
    auto X = TensorD::zeros({t.n_verts(), 3});
    for (int64_t i = 0; i < X.numel(); ++i) X.data()[i] = rng.uniform(-1, 1);
    auto U = TensorD::zeros({3, 16, 16});
    for (int64_t i = 0; i < U.numel(); ++i) U.data()[i] = rng.uniform(-1, 1);

    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto Xg = X.clone();
    Xg.set_requires_grad(true);
    auto R = rasterize(Xg, mesh, p.cam, 16, 16);
    auto loss = sum(mul(R, U));
    tape.backward(loss);
    auto gX = tape.grad_of(Xg);  // = R^T(U)

    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < R.numel(); ++i) lhs += R.data()[i] * U.data()[i];
    for (int64_t i = 0; i < X.numel(); ++i) rhs += X.data()[i] * gX.data()[i];
    CHECK(std::fabs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("silhouette matches 16x supersampled oracle on >= 99% of pixels") {
  RngStream rng(47, "raster_oracle");
  auto t = body::make_template({.coarse = true});
  for (int trial = 0; trial < 5; ++trial) {
    body::BodyParams p;
    for (int i = 0; i < 72; ++i) p.theta[i] = rng.uniform(-0.7, 0.7);
    p.cam = {0.8, rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    auto mesh = body::lbs(t, p);
    const int64_t H = 32, W = 32;
    auto sil = render_silhouette(mesh, p.cam, H, W);

    const int64_t n = static_cast<int64_t>(mesh.verts.size()) / 3;
    std::vector<double> pts(n * 2);
    body::project(mesh.verts.data(), n, p.cam, W, H, pts.data());
    auto oracle = supersampled_coverage(pts, t.faces, H, W);
    int64_t agree = 0;
    for (int64_t i = 0; i < H * W; ++i) agree += (sil[i] == oracle[i]) ? 1 : 0;
    CHECK(double(agree) / double(H * W) >= 0.99);
    // sanity: the figure is actually visible
    int64_t covered = 0;
    for (uint8_t v : sil) covered += v;
    CHECK(covered > 30);
  }
}

TEST_CASE("coordinate map: zero background, vertex coordinates at exact hits") {
  auto t = body::make_template({.coarse = true});
  body::BodyParams p;
  p.cam = {0.8, 0.0, 0.0};
  auto mesh = body::lbs(t, p);
  auto cm = render_coordinate_map<double>(mesh, p.cam, 32, 32);
  Geometry geom = rasterize_geometry(mesh, p.cam, 32, 32);
  for (int64_t pix = 0; pix < 32 * 32; ++pix)
    if (!geom.coverage[pix])
      for (int c = 0; c < 3; ++c) CHECK(cm.data()[c * 32 * 32 + pix] == 0.0);

  // definitional identity with rasterize(V_rel)
  auto vrel = TensorD::zeros({t.n_verts(), 3});
  for (int64_t i = 0; i < vrel.numel(); ++i) vrel.data()[i] = mesh.verts_rel[i];
  auto direct = rasterize(vrel, mesh, p.cam, 32, 32);
  for (int64_t i = 0; i < cm.numel(); ++i) CHECK(cm.data()[i] == direct.data()[i]);

  // a vertex that projects exactly onto a pixel center reads its own coords
  auto fm = flat_mesh({{4, 4, 0}, {10, 5, 0}, {6, 11, 0}}, {0, 1, 2}, 16, 16);
  auto xyz = TensorD::zeros({3, 3});
  for (int64_t i = 0; i < 9; ++i) xyz.data()[i] = fm.mesh.verts_rel[i];
  Geometry g2;
  auto out = rasterize(xyz, fm.mesh, kCam, 16, 16, &g2);
  const int64_t pix = 4 * 16 + 4;
  REQUIRE(g2.coverage[pix] == 1);
  for (int c = 0; c < 3; ++c)
    CHECK(out.data()[c * 256 + pix] == doctest::Approx(fm.mesh.verts_rel[c]).epsilon(1e-9));
}
