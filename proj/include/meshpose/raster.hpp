// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "meshpose/body.hpp"
#include "meshpose/ops.hpp"

// Differentiable rasterizer: projects per-vertex features to the image plane
// with a per-pixel z-buffer and barycentric interpolation. Geometry gets no
// gradient; interpolation is linear in the features, so the backward pass is
// the exact adjoint scatter. Pixel (i,j) is tested at continuous coordinate
// (x=j, y=i) in the same pixel-center space body::project maps into; ties in
// depth keep the lower face index; back faces are kept (no culling).

namespace meshpose::raster {

struct Geometry {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> coverage;  // h*w in {0,1}
  std::vector<int32_t> face_id;   // h*w, -1 = background
  std::vector<double> bary;       // 3*h*w, zeros on background
};

inline Geometry rasterize_geometry(const std::vector<double>& pts2d,
                                   const std::vector<double>& depth,
                                   const std::vector<int32_t>& faces, int64_t h, int64_t w) {
  const int64_t nf = static_cast<int64_t>(faces.size()) / 3;
  Geometry g;
  g.h = h;
  g.w = w;
  g.coverage.assign(h * w, 0);
  g.face_id.assign(h * w, -1);
  g.bary.assign(3 * h * w, 0.0);
  std::vector<double> zbuf(h * w, std::numeric_limits<double>::infinity());

  auto edge = [](double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  };

  for (int64_t f = 0; f < nf; ++f) {
    const int32_t v0 = faces[f * 3], v1 = faces[f * 3 + 1], v2 = faces[f * 3 + 2];
    const double x0 = pts2d[v0 * 2], y0 = pts2d[v0 * 2 + 1];
    const double x1 = pts2d[v1 * 2], y1 = pts2d[v1 * 2 + 1];
    const double x2 = pts2d[v2 * 2], y2 = pts2d[v2 * 2 + 1];
    const double area = edge(x0, y0, x1, y1, x2, y2);
    if (std::fabs(area) < 1e-12) continue;  // degenerate in ndc
    const double inv_area = 1.0 / area;

    int64_t xlo = static_cast<int64_t>(std::ceil(std::min({x0, x1, x2})));
    int64_t xhi = static_cast<int64_t>(std::floor(std::max({x0, x1, x2})));
    int64_t ylo = static_cast<int64_t>(std::ceil(std::min({y0, y1, y2})));
    int64_t yhi = static_cast<int64_t>(std::floor(std::max({y0, y1, y2})));
    xlo = std::max<int64_t>(xlo, 0);
    ylo = std::max<int64_t>(ylo, 0);
    xhi = std::min<int64_t>(xhi, w - 1);
    yhi = std::min<int64_t>(yhi, h - 1);

    for (int64_t py = ylo; py <= yhi; ++py) {
      for (int64_t px = xlo; px <= xhi; ++px) {
        const double cx = static_cast<double>(px), cy = static_cast<double>(py);
        const double l0 = edge(x1, y1, x2, y2, cx, cy) * inv_area;
        const double l1 = edge(x2, y2, x0, y0, cx, cy) * inv_area;
        const double l2 = 1.0 - l0 - l1;  // exact partition of unity
        if (l0 < 0 || l1 < 0 || l2 < 0) continue;
        const double z = l0 * depth[v0] + l1 * depth[v1] + l2 * depth[v2];
        const int64_t pix = py * w + px;
        if (z < zbuf[pix]) {  // ties keep the earlier (lower) face
          zbuf[pix] = z;
          g.coverage[pix] = 1;
          g.face_id[pix] = static_cast<int32_t>(f);
          g.bary[pix * 3 + 0] = l0;
          g.bary[pix * 3 + 1] = l1;
          g.bary[pix * 3 + 2] = l2;
        }
      }
    }
  }
  return g;
}

inline Geometry rasterize_geometry(const body::BodyMesh& mesh, const std::array<double, 3>& cam,
                                   int64_t h, int64_t w) {
  const int64_t n = static_cast<int64_t>(mesh.verts.size()) / 3;
  std::vector<double> pts(n * 2);
  body::project(mesh.verts.data(), n, cam, w, h, pts.data());
  std::vector<double> depth(n);
  for (int64_t i = 0; i < n; ++i) depth[i] = mesh.verts[i * 3 + 2];
  return rasterize_geometry(pts, depth, mesh.tmpl->faces, h, w);
}

// Interpolates per-vertex features over precomputed geometry. Recorded on the
// tape w.r.t. X; the backward scatters barycentric weights row-major over
// pixels, a fixed order.
template <typename T>
Tensor<T> rasterize_features(const Tensor<T>& x, const Geometry& geom,
                             const std::vector<int32_t>& faces) {
  check(x.rank() == 2, "rasterize: features must be [N,C], got " + shape_str(x.shape()));
  const int64_t c = x.dim(1), hw = geom.h * geom.w;
  Tensor<T> out = Tensor<T>::zeros({c, geom.h, geom.w});
  {
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t pix = 0; pix < hw; ++pix) {
      const int32_t f = geom.face_id[pix];
      if (f < 0) continue;
      const int32_t* tri = faces.data() + int64_t(f) * 3;
      const double* l = geom.bary.data() + pix * 3;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double v = l[0] * double(xd[tri[0] * c + ch]) +
                         l[1] * double(xd[tri[1] * c + ch]) +
                         l[2] * double(xd[tri[2] * c + ch]);
        od[ch * hw + pix] = static_cast<T>(v);
      }
    }
  }
  if (active_tape<T>() != nullptr && x.requires_grad()) {
    Tape<T>& tp = *active_tape<T>();
    int nx = tp.ensure_node(x);
    out.set_requires_grad(true);
    const Geometry* gp = &geom;           // geometry outlives the tape step
    const std::vector<int32_t>* fp = &faces;
    // safer: copy the per-pixel taps into the closure
    struct Tap {
      int64_t pix;
      int32_t v[3];
      T w[3];
    };
    std::vector<Tap> taps;
    taps.reserve(hw / 4);
    for (int64_t pix = 0; pix < hw; ++pix) {
      const int32_t f = gp->face_id[pix];
      if (f < 0) continue;
      const int32_t* tri = fp->data() + int64_t(f) * 3;
      taps.push_back({pix,
                      {tri[0], tri[1], tri[2]},
                      {static_cast<T>(gp->bary[pix * 3]), static_cast<T>(gp->bary[pix * 3 + 1]),
                       static_cast<T>(gp->bary[pix * 3 + 2])}});
    }
    tp.record(out, [nx, taps, c, hw](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      for (const auto& tap : taps) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const T gv = g[ch * hw + tap.pix];
          gx[tap.v[0] * c + ch] += tap.w[0] * gv;
          gx[tap.v[1] * c + ch] += tap.w[1] * gv;
          gx[tap.v[2] * c + ch] += tap.w[2] * gv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> rasterize(const Tensor<T>& x, const body::BodyMesh& mesh,
                    const std::array<double, 3>& cam, int64_t h, int64_t w,
                    Geometry* geom_out = nullptr) {
  check(x.dim(0) == static_cast<int64_t>(mesh.verts.size()) / 3,
        "rasterize: feature rows != vertex count");
  Geometry geom = rasterize_geometry(mesh, cam, h, w);
  Tensor<T> out = rasterize_features(x, geom, mesh.tmpl->faces);
  if (geom_out != nullptr) *geom_out = std::move(geom);
  return out;
}

// Hard {0,1} coverage mask of the projected mesh.
inline std::vector<uint8_t> render_silhouette(const body::BodyMesh& mesh,
                                              const std::array<double, 3>& cam, int64_t h,
                                              int64_t w) {
  return rasterize_geometry(mesh, cam, h, w).coverage;
}

// Root-relative vertex coordinates splatted to the body area; background
// pixels are exactly zero.
template <typename T>
Tensor<T> render_coordinate_map(const body::BodyMesh& mesh, const std::array<double, 3>& cam,
                                int64_t h, int64_t w) {
  const int64_t n = static_cast<int64_t>(mesh.verts.size()) / 3;
  Tensor<T> vrel = Tensor<T>::zeros({n, 3});
  for (int64_t i = 0; i < n * 3; ++i) vrel.data()[i] = static_cast<T>(mesh.verts_rel[i]);
  return rasterize(vrel, mesh, cam, h, w);
}

// 1-pixel binary dilation, used for the foreground/background split.
inline std::vector<uint8_t> dilate1(const std::vector<uint8_t>& m, int64_t h, int64_t w) {
  std::vector<uint8_t> out(m.size(), 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int64_t dy = -1; dy <= 1 && !v; ++dy)
        for (int64_t dx = -1; dx <= 1 && !v; ++dx) {
          int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && m[yy * w + xx]) v = 1;
        }
      out[y * w + x] = v;
    }
  return out;
}

}  // namespace meshpose::raster
