// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/body.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "meshpose/rng.hpp"
#include "meshpose/tape.hpp"

namespace meshpose::body {

const std::array<int, kJoints> kParent = {-1, 0, 0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                          9,  9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

namespace {

struct V3 {
  double x = 0, y = 0, z = 0;
};
inline V3 operator+(V3 a, V3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline V3 operator-(V3 a, V3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline V3 operator*(double s, V3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline V3 cross(V3 a, V3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(V3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }
inline V3 normalized(V3 a) {
  double n = norm(a);
  return n > 0 ? (1.0 / n) * a : V3{1, 0, 0};
}

// Rest-pose bone offsets (child joint relative to parent), world y pointing
// down so figures render upright under the y-down image convention.
const V3 kOffset[kJoints] = {
    {0.00, 0.00, 0.00},    // 0 pelvis (root)
    {+0.09, 0.02, 0.00},   // 1 l_hip
    {-0.09, 0.02, 0.00},   // 2 r_hip
    {0.00, -0.10, 0.00},   // 3 spine1
    {0.00, 0.40, 0.00},    // 4 l_knee
    {0.00, 0.40, 0.00},    // 5 r_knee
    {0.00, -0.12, 0.00},   // 6 spine2
    {0.00, 0.41, 0.00},    // 7 l_ankle
    {0.00, 0.41, 0.00},    // 8 r_ankle
    {0.00, -0.12, 0.00},   // 9 spine3
    {0.00, 0.05, 0.12},    // 10 l_foot
    {0.00, 0.05, 0.12},    // 11 r_foot
    {0.00, -0.10, 0.00},   // 12 neck
    {+0.08, -0.06, 0.00},  // 13 l_collar
    {-0.08, -0.06, 0.00},  // 14 r_collar
    {0.00, -0.12, 0.00},   // 15 head
    {+0.10, -0.01, 0.00},  // 16 l_shoulder
    {-0.10, -0.01, 0.00},  // 17 r_shoulder
    {+0.26, 0.00, 0.00},   // 18 l_elbow
    {-0.26, 0.00, 0.00},   // 19 r_elbow
    {+0.25, 0.00, 0.00},   // 20 l_wrist
    {-0.25, 0.00, 0.00},   // 21 r_wrist
    {+0.08, 0.00, 0.00},   // 22 l_hand
    {-0.08, 0.00, 0.00},   // 23 r_hand
};

const double kRadius[kJoints] = {
    0.12,  0.07,  0.07,  0.115, 0.068, 0.068, 0.12,  0.05,  0.05,  0.115, 0.042, 0.042,
    0.045, 0.045, 0.045, 0.085, 0.045, 0.045, 0.042, 0.042, 0.036, 0.036, 0.034, 0.034};

// Leaf bones extend past their joint so hands/feet/cranium have volume.
double bone_extension(int j) {
  switch (j) {
    case 15: return 2.2;            // head
    case 22: case 23: return 1.6;   // hands
    case 10: case 11: return 1.4;   // feet
    default: return 1.0;
  }
}

double bone_taper(int j) {
  if (j == 0 || j == 3 || j == 6 || j == 9) return 0.05;  // torso
  if (j == 15) return 0.1;
  return 0.3;
}

// Linear shape knobs: bone-vector scale and radius scale per (knob, bone).
void shape_coeffs(double len[kShapes][kJoints], double rad[kShapes][kJoints]) {
  std::memset(len, 0, sizeof(double) * kShapes * kJoints);
  std::memset(rad, 0, sizeof(double) * kShapes * kJoints);
  auto set = [&](double (*tab)[kJoints], int k, std::initializer_list<int> bones, double c) {
    for (int j : bones) tab[k][j] = c;
  };
  for (int j = 0; j < kJoints; ++j) len[0][j] = 0.05;  // overall height
  for (int j = 0; j < kJoints; ++j) rad[1][j] = 0.08;  // overall girth
  set(len, 2, {3, 6, 9, 12}, 0.06);                    // torso length
  set(len, 3, {4, 5, 7, 8}, 0.06);                     // leg length
  set(len, 4, {18, 19, 20, 21}, 0.06);                 // arm length
  set(len, 5, {15}, 0.08);                             // head size
  set(rad, 5, {15}, 0.08);
  set(len, 6, {13, 14, 16, 17}, 0.08);                              // shoulder width
  set(rad, 7, {4, 5, 7, 8, 10, 11, 18, 19, 20, 21, 22, 23}, 0.08);  // limb thickness
  set(rad, 8, {0, 3, 6, 9}, 0.08);                                  // torso thickness
  set(len, 9, {1, 2}, 0.10);                                        // hip width
}

struct SkeletonTables {
  V3 offset[kJoints];
  double radius[kJoints];
  double len_c[kShapes][kJoints];
  double rad_c[kShapes][kJoints];
};

SkeletonTables seeded_tables(uint64_t seed) {
  SkeletonTables t;
  shape_coeffs(t.len_c, t.rad_c);
  RngStream rng(seed, "body_template");
  for (int j = 0; j < kJoints; ++j) {
    const double ls = 1.0 + 0.10 * (rng.uniform() - 0.5);
    const double rs = 1.0 + 0.14 * (rng.uniform() - 0.5);
    t.offset[j] = ls * kOffset[j];
    t.radius[j] = rs * kRadius[j];
  }
  return t;
}

// Joint positions for a given beta; exactly linear in beta.
void joint_positions(const SkeletonTables& t, const double* beta, V3 out[kJoints]) {
  for (int j = 0; j < kJoints; ++j) {
    double s = 1.0;
    for (int k = 0; k < kShapes; ++k) s += t.len_c[k][j] * beta[k];
    V3 off = s * t.offset[j];
    out[j] = kParent[j] < 0 ? off : out[kParent[j]] + off;
  }
}

double bone_radius(const SkeletonTables& t, const double* beta, int j) {
  double s = 1.0;
  for (int k = 0; k < kShapes; ++k) s += t.rad_c[k][j] * beta[k];
  return s * t.radius[j];
}

void ring_frame(V3 axis, V3& u, V3& v) {
  V3 n = normalized(axis);
  V3 ref = std::fabs(n.y) < 0.9 ? V3{0, 1, 0} : V3{1, 0, 0};
  u = normalized(cross(ref, n));
  v = cross(n, u);
}

// Segment endpoints for bone j. The root gets a pelvis stub.
void bone_segment(const SkeletonTables& t, const double* beta, const V3 joints[kJoints], int j,
                  V3& a, V3& b) {
  if (j == 0) {
    double s = 1.0;
    for (int k = 0; k < kShapes; ++k) s += t.len_c[k][0] * beta[k];
    a = joints[0] + (s * V3{0, +0.07, 0});
    b = joints[0] + (s * V3{0, -0.07, 0});
    return;
  }
  a = joints[kParent[j]];
  b = a + bone_extension(j) * (joints[j] - a);
}

// Vertex positions for one beta; faces/weights/metadata are emitted only on
// the first build (topo_out != nullptr).
std::vector<double> build_vertices(const TemplateConfig& cfg, const SkeletonTables& tabs,
                                   const double* beta, BodyTemplate* topo_out) {
  std::vector<double> pos;
  V3 joints[kJoints];
  joint_positions(tabs, beta, joints);

  auto push_vert = [&](V3 p, int bone, int ring, int azim, double tt) {
    pos.push_back(p.x);
    pos.push_back(p.y);
    pos.push_back(p.z);
    if (topo_out != nullptr) {
      topo_out->vert_bone.push_back(bone);
      topo_out->vert_ring.push_back(ring);
      topo_out->vert_azim.push_back(azim);
      topo_out->vert_t.push_back(static_cast<float>(tt));
    }
  };
  auto push_face = [&](int a, int b, int c) {
    if (topo_out != nullptr) {
      topo_out->faces.push_back(a);
      topo_out->faces.push_back(b);
      topo_out->faces.push_back(c);
    }
  };
  auto push_weights = [&](int j_main, double w_main, int j_sub, double w_sub) {
    if (topo_out == nullptr) return;
    std::array<float, kJoints> row{};
    row[j_main] = static_cast<float>(w_main);
    if (w_sub > 0) row[j_sub] += static_cast<float>(w_sub);
    for (float w : row) topo_out->skin_w.push_back(w);
  };

  if (!cfg.coarse) {
    // One closed tube per bone: rings_per_bone rings, a fan cap at the
    // proximal end and a cone to a pole vertex at the distal end.
    const int R = cfg.rings_per_bone, res = cfg.ring_res;
    for (int j = 0; j < kJoints; ++j) {
      V3 a, b;
      bone_segment(tabs, beta, joints, j, a, b);
      V3 u, v;
      ring_frame(b - a, u, v);
      const double r0 = bone_radius(tabs, beta, j);
      const int base = static_cast<int>(pos.size() / 3);
      const int drive = j == 0 ? 0 : kParent[j];
      for (int ri = 0; ri < R; ++ri) {
        const double tt = (ri + 0.5) / R;
        const V3 c = a + tt * (b - a);
        const double r = r0 * (1.0 - bone_taper(j) * tt);
        for (int m = 0; m < res; ++m) {
          const double phi = 2.0 * M_PI * m / res;
          push_vert(c + (r * std::cos(phi)) * u + (r * std::sin(phi)) * v, j, ri, m, tt);
          // distal 20% blends linearly from the driving joint to joint j
          if (j == 0 || tt < 0.8) {
            push_weights(drive, 1.0, drive, 0.0);
          } else {
            const double w = (tt - 0.8) / 0.2;
            push_weights(drive, 1.0 - w, j, w);
          }
        }
      }
      push_vert(b, j, R - 1, -1, 1.0);  // distal pole
      if (j == 0) push_weights(0, 1.0, 0, 0.0);
      else push_weights(j, 1.0, j, 0.0);
      const int pole = base + R * res;
      // proximal fan cap anchored at ring-0 vertex 0
      for (int m = 1; m + 1 < res; ++m) push_face(base, base + m + 1, base + m);
      // tube bands
      for (int ri = 0; ri + 1 < R; ++ri)
        for (int m = 0; m < res; ++m) {
          const int m1 = (m + 1) % res;
          const int i00 = base + ri * res + m, i01 = base + ri * res + m1;
          const int i10 = base + (ri + 1) * res + m, i11 = base + (ri + 1) * res + m1;
          push_face(i00, i01, i10);
          push_face(i01, i11, i10);
        }
      // distal cone
      for (int m = 0; m < res; ++m)
        push_face(base + (R - 1) * res + m, base + (R - 1) * res + (m + 1) % res, pole);
    }
    return pos;
  }

  // Coarse test body: 12 merged segments, each a 6-vertex bipyramid (square
  // ring plus two poles) on the same 24-joint skeleton.
  struct Seg {
    int ja, jb;  // endpoint joints (0,0 marks the pelvis stub)
    int drive;   // joint whose transform carries the segment
    int blend;   // joint blended in at the distal pole
  };
  const Seg segs[12] = {
      {0, 0, 0, 0},      // pelvis stub
      {0, 6, 3, 6},      // lower torso
      {6, 12, 6, 9},     // upper torso
      {12, 15, 12, 15},  // head
      {16, 18, 16, 18}, {18, 20, 18, 20},  // left arm
      {17, 19, 17, 19}, {19, 21, 19, 21},  // right arm
      {1, 4, 1, 4},     {4, 7, 4, 7},      // left leg
      {2, 5, 2, 5},     {5, 8, 5, 8},      // right leg
  };
  for (int si = 0; si < 12; ++si) {
    const Seg& sg = segs[si];
    V3 a, b;
    if (si == 0) {
      bone_segment(tabs, beta, joints, 0, a, b);
    } else {
      a = joints[sg.ja];
      b = joints[sg.jb];
      if (sg.jb == 15) b = a + 2.2 * (b - a);  // extend cranium
    }
    V3 u, v;
    ring_frame(b - a, u, v);
    const double r = bone_radius(tabs, beta, si == 0 ? 0 : sg.jb) * 1.4;
    const int base = static_cast<int>(pos.size() / 3);
    push_vert(a, si, 0, -1, 0.0);
    push_weights(sg.drive, 1.0, sg.drive, 0.0);
    const V3 c = a + 0.5 * (b - a);
    for (int m = 0; m < 4; ++m) {
      const double phi = 2.0 * M_PI * m / 4;
      push_vert(c + (r * std::cos(phi)) * u + (r * std::sin(phi)) * v, si, 0, m, 0.5);
      push_weights(sg.drive, 1.0, sg.drive, 0.0);
    }
    push_vert(b, si, 0, -1, 1.0);
    if (sg.drive == sg.blend) push_weights(sg.drive, 1.0, sg.drive, 0.0);
    else push_weights(sg.drive, 0.5, sg.blend, 0.5);
    const int pa = base, pb = base + 5;
    for (int m = 0; m < 4; ++m) {
      const int r0 = base + 1 + m, r1 = base + 1 + (m + 1) % 4;
      push_face(pa, r1, r0);
      push_face(r0, r1, pb);
    }
  }
  return pos;
}

}  // namespace

BodyTemplate make_template(const TemplateConfig& cfg) {
  check(cfg.ring_res >= 3, "make_template: ring_res must be >= 3");
  check(cfg.rings_per_bone >= 1, "make_template: rings_per_bone must be >= 1");
  SkeletonTables tabs = seeded_tables(cfg.seed);

  BodyTemplate t;
  t.parents.assign(kParent.begin(), kParent.end());

  double beta0[kShapes] = {};
  std::vector<double> rest = build_vertices(cfg, tabs, beta0, &t);
  const int64_t n = static_cast<int64_t>(rest.size() / 3);
  t.verts.resize(n * 3);
  for (int64_t i = 0; i < n * 3; ++i) t.verts[i] = static_cast<float>(rest[i]);

  V3 joints0[kJoints];
  joint_positions(tabs, beta0, joints0);
  t.joints.resize(kJoints * 3);
  for (int j = 0; j < kJoints; ++j) {
    t.joints[j * 3 + 0] = static_cast<float>(joints0[j].x);
    t.joints[j * 3 + 1] = static_cast<float>(joints0[j].y);
    t.joints[j * 3 + 2] = static_cast<float>(joints0[j].z);
  }

  // The generator is linear in beta, so each basis vector is an exact
  // difference of evaluations at the unit knobs.
  t.shape_basis.resize(kShapes * n * 3);
  t.joint_basis.resize(kShapes * kJoints * 3);
  for (int k = 0; k < kShapes; ++k) {
    double beta[kShapes] = {};
    beta[k] = 1.0;
    std::vector<double> vk = build_vertices(cfg, tabs, beta, nullptr);
    for (int64_t i = 0; i < n * 3; ++i)
      t.shape_basis[k * n * 3 + i] = static_cast<float>(vk[i] - rest[i]);
    V3 jk[kJoints];
    joint_positions(tabs, beta, jk);
    for (int j = 0; j < kJoints; ++j) {
      t.joint_basis[(k * kJoints + j) * 3 + 0] = static_cast<float>(jk[j].x - joints0[j].x);
      t.joint_basis[(k * kJoints + j) * 3 + 1] = static_cast<float>(jk[j].y - joints0[j].y);
      t.joint_basis[(k * kJoints + j) * 3 + 2] = static_cast<float>(jk[j].z - joints0[j].z);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Rodrigues

void rodrigues(const double* k, double* r) {
  const double x = k[0], y = k[1], z = k[2];
  const double th2 = x * x + y * y + z * z;
  const double th = std::sqrt(th2);
  double a, b;  // sin(th)/th, (1-cos(th))/th^2
  if (th < 1e-8) {
    a = 1.0 - th2 / 6.0;
    b = 0.5 - th2 / 24.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  r[0] = 1.0 - b * (y * y + z * z);
  r[1] = b * x * y - a * z;
  r[2] = b * x * z + a * y;
  r[3] = b * x * y + a * z;
  r[4] = 1.0 - b * (x * x + z * z);
  r[5] = b * y * z - a * x;
  r[6] = b * x * z - a * y;
  r[7] = b * y * z + a * x;
  r[8] = 1.0 - b * (x * x + y * y);
}

// d<G,R>/dk via the closed-form rotation derivative
// dR/dk_a = (k_a [k] + [k x (I - R) e_a]) / |k|^2 * R, with [e_a] at k -> 0.
void rodrigues_vjp(const double* k, const double* g, double* dk) {
  double r[9];
  rodrigues(k, r);
  const double th2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
  auto skew = [](const double* w, double* m) {
    m[0] = 0; m[1] = -w[2]; m[2] = w[1];
    m[3] = w[2]; m[4] = 0; m[5] = -w[0];
    m[6] = -w[1]; m[7] = w[0]; m[8] = 0;
  };
  for (int a = 0; a < 3; ++a) {
    double da[9];
    if (th2 < 1e-16) {
      double e[3] = {0, 0, 0};
      e[a] = 1.0;
      skew(e, da);
    } else {
      // w = k x (I - R) e_a
      double col[3] = {-r[a], -r[3 + a], -r[6 + a]};
      col[a] += 1.0;
      double w[3] = {k[1] * col[2] - k[2] * col[1], k[2] * col[0] - k[0] * col[2],
                     k[0] * col[1] - k[1] * col[0]};
      double kk[9], ww[9], num[9];
      skew(k, kk);
      skew(w, ww);
      for (int i = 0; i < 9; ++i) num[i] = (k[a] * kk[i] + ww[i]) / th2;
      for (int i = 0; i < 3; ++i)  // da = num * R
        for (int j = 0; j < 3; ++j)
          da[i * 3 + j] =
              num[i * 3 + 0] * r[0 + j] + num[i * 3 + 1] * r[3 + j] + num[i * 3 + 2] * r[6 + j];
    }
    double s = 0;
    for (int i = 0; i < 9; ++i) s += g[i] * da[i];
    dk[a] = s;
  }
}

// ---------------------------------------------------------------------------
// LBS

namespace {

struct FkState {
  double rloc[kJoints][9];
  double rw[kJoints][9];
  double jrest[kJoints][3];  // shaped rest joints
  double jcur[kJoints][3];
};

void mat3_mul(const double* a, const double* b, double* c) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      c[i * 3 + j] = a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] + a[i * 3 + 2] * b[6 + j];
}

void run_fk(const BodyTemplate& t, const double* theta, const double* beta, FkState& fk) {
  for (int j = 0; j < kJoints; ++j) {
    for (int d = 0; d < 3; ++d) {
      double v = t.joints[j * 3 + d];
      for (int k = 0; k < kShapes; ++k)
        v += beta[k] * t.joint_basis[(k * kJoints + j) * 3 + d];
      fk.jrest[j][d] = v;
    }
    rodrigues(theta + j * 3, fk.rloc[j]);
    const int p = kParent[j];
    if (p < 0) {
      std::memcpy(fk.rw[j], fk.rloc[j], sizeof(fk.rw[j]));
      std::memcpy(fk.jcur[j], fk.jrest[j], sizeof(fk.jcur[j]));
    } else {
      mat3_mul(fk.rw[p], fk.rloc[j], fk.rw[j]);
      double d[3] = {fk.jrest[j][0] - fk.jrest[p][0], fk.jrest[j][1] - fk.jrest[p][1],
                     fk.jrest[j][2] - fk.jrest[p][2]};
      for (int i = 0; i < 3; ++i)
        fk.jcur[j][i] = fk.jcur[p][i] + fk.rw[p][i * 3] * d[0] + fk.rw[p][i * 3 + 1] * d[1] +
                        fk.rw[p][i * 3 + 2] * d[2];
    }
  }
}

void skin_vertices(const BodyTemplate& t, const FkState& fk, const double* beta,
                   std::vector<double>& out) {
  const int64_t n = t.n_verts();
  out.resize(n * 3);
  for (int64_t i = 0; i < n; ++i) {
    double vb[3];
    for (int d = 0; d < 3; ++d) {
      double v = t.verts[i * 3 + d];
      for (int k = 0; k < kShapes; ++k)
        v += beta[k] * t.shape_basis[(k * n + i) * 3 + d];
      vb[d] = v;
    }
    double acc[3] = {0, 0, 0};
    const float* wrow = t.skin_w.data() + i * kJoints;
    for (int j = 0; j < kJoints; ++j) {
      const double w = wrow[j];
      if (w == 0.0) continue;
      double loc[3] = {vb[0] - fk.jrest[j][0], vb[1] - fk.jrest[j][1], vb[2] - fk.jrest[j][2]};
      for (int d = 0; d < 3; ++d)
        acc[d] += w * (fk.rw[j][d * 3] * loc[0] + fk.rw[j][d * 3 + 1] * loc[1] +
                       fk.rw[j][d * 3 + 2] * loc[2] + fk.jcur[j][d]);
    }
    out[i * 3 + 0] = acc[0];
    out[i * 3 + 1] = acc[1];
    out[i * 3 + 2] = acc[2];
  }
}

}  // namespace

BodyMesh lbs(const BodyTemplate& t, const double* theta, const double* beta) {
  for (int i = 0; i < kJoints * 3; ++i)
    check(std::isfinite(theta[i]), "lbs: non-finite pose parameter");
  for (int i = 0; i < kShapes; ++i)
    check(std::isfinite(beta[i]), "lbs: non-finite shape parameter");
  FkState fk;
  run_fk(t, theta, beta, fk);
  BodyMesh m;
  m.tmpl = &t;
  skin_vertices(t, fk, beta, m.verts);
  m.root = {fk.jcur[0][0], fk.jcur[0][1], fk.jcur[0][2]};
  const int64_t n = t.n_verts();
  m.verts_rel.resize(n * 3);
  for (int64_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) m.verts_rel[i * 3 + d] = m.verts[i * 3 + d] - m.root[d];
  return m;
}

void project(const double* verts, int64_t n, const std::array<double, 3>& cam, int64_t w,
             int64_t h, double* pts) {
  check(cam[0] > 0, "project: camera scale must be positive");
  for (int64_t i = 0; i < n; ++i) {
    const double nx = cam[0] * verts[i * 3 + 0] + cam[1];
    const double ny = cam[0] * verts[i * 3 + 1] + cam[2];
    pts[i * 2 + 0] = (nx + 1.0) * 0.5 * static_cast<double>(w - 1);
    pts[i * 2 + 1] = (ny + 1.0) * 0.5 * static_cast<double>(h - 1);
  }
}

std::vector<double> project(const BodyMesh& mesh, const std::array<double, 3>& cam, int64_t w,
                            int64_t h) {
  std::vector<double> pts(mesh.verts.size() / 3 * 2);
  project(mesh.verts.data(), static_cast<int64_t>(mesh.verts.size() / 3), cam, w, h, pts.data());
  return pts;
}

// ---------------------------------------------------------------------------
// Differentiable LBS (verification path)

Tensor<double> lbs_op(const BodyTemplate& t, const Tensor<double>& theta,
                      const Tensor<double>& beta) {
  check(theta.shape() == Shape{kJoints, 3}, "lbs_op: theta must be [24,3]");
  check(beta.shape() == Shape{kShapes}, "lbs_op: beta must be [10]");
  const int64_t n = t.n_verts();

  FkState fk;
  run_fk(t, theta.data(), beta.data(), fk);
  Tensor<double> out = Tensor<double>::zeros({n, 3});
  {
    std::vector<double> v;
    skin_vertices(t, fk, beta.data(), v);
    std::copy(v.begin(), v.end(), out.data());
  }

  if (active_tape<double>() != nullptr && (theta.requires_grad() || beta.requires_grad())) {
    Tape<double>& tp = *active_tape<double>();
    int nt = theta.requires_grad() ? tp.ensure_node(theta) : -1;
    int nb = beta.requires_grad() ? tp.ensure_node(beta) : -1;
    out.set_requires_grad(true);
    Tensor<double> th = theta, be = beta;
    const BodyTemplate* tm = &t;
    tp.record(out, [nt, nb, th, be, tm, fk, n](Tape<double>& tape, const double* g) {
      double drw[kJoints][9] = {};
      double djcur[kJoints][3] = {};
      double djrest[kJoints][3] = {};
      std::vector<double> dvb(n * 3, 0.0);

      // vertex terms
      for (int64_t i = 0; i < n; ++i) {
        double vb[3];
        for (int d = 0; d < 3; ++d) {
          double v = tm->verts[i * 3 + d];
          for (int k = 0; k < kShapes; ++k)
            v += be.data()[k] * tm->shape_basis[(k * n + i) * 3 + d];
          vb[d] = v;
        }
        const double gi[3] = {g[i * 3], g[i * 3 + 1], g[i * 3 + 2]};
        const float* wrow = tm->skin_w.data() + i * kJoints;
        for (int j = 0; j < kJoints; ++j) {
          const double w = wrow[j];
          if (w == 0.0) continue;
          const double loc[3] = {vb[0] - fk.jrest[j][0], vb[1] - fk.jrest[j][1],
                                 vb[2] - fk.jrest[j][2]};
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) drw[j][r * 3 + c] += w * gi[r] * loc[c];
          double rtg[3];
          for (int c = 0; c < 3; ++c)
            rtg[c] = fk.rw[j][0 * 3 + c] * gi[0] + fk.rw[j][1 * 3 + c] * gi[1] +
                     fk.rw[j][2 * 3 + c] * gi[2];
          for (int d = 0; d < 3; ++d) {
            djcur[j][d] += w * gi[d];
            dvb[i * 3 + d] += w * rtg[d];
            djrest[j][d] -= w * rtg[d];
          }
        }
      }

      // walk the tree children-first (parents have lower indices)
      double dtheta[kJoints][3];
      for (int j = kJoints - 1; j >= 1; --j) {
        const int p = kParent[j];
        const double dj[3] = {fk.jrest[j][0] - fk.jrest[p][0], fk.jrest[j][1] - fk.jrest[p][1],
                              fk.jrest[j][2] - fk.jrest[p][2]};
        // jcur_j = jcur_p + rw_p * dj
        for (int d = 0; d < 3; ++d) djcur[p][d] += djcur[j][d];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) drw[p][r * 3 + c] += djcur[j][r] * dj[c];
        double rtd[3];
        for (int c = 0; c < 3; ++c)
          rtd[c] = fk.rw[p][0 * 3 + c] * djcur[j][0] + fk.rw[p][1 * 3 + c] * djcur[j][1] +
                   fk.rw[p][2 * 3 + c] * djcur[j][2];
        for (int d = 0; d < 3; ++d) {
          djrest[j][d] += rtd[d];
          djrest[p][d] -= rtd[d];
        }
        // rw_j = rw_p * rloc_j
        double dr[9];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            drw[p][r * 3 + c] += drw[j][r * 3 + 0] * fk.rloc[j][c * 3 + 0] +
                                 drw[j][r * 3 + 1] * fk.rloc[j][c * 3 + 1] +
                                 drw[j][r * 3 + 2] * fk.rloc[j][c * 3 + 2];
            dr[r * 3 + c] = fk.rw[p][0 * 3 + r] * drw[j][0 * 3 + c] +
                            fk.rw[p][1 * 3 + r] * drw[j][1 * 3 + c] +
                            fk.rw[p][2 * 3 + r] * drw[j][2 * 3 + c];
          }
        rodrigues_vjp(th.data() + j * 3, dr, dtheta[j]);
      }
      for (int d = 0; d < 3; ++d) djrest[0][d] += djcur[0][d];
      rodrigues_vjp(th.data(), drw[0], dtheta[0]);

      if (nt >= 0) {
        double* gt = tape.grad_buf(nt).data();
        for (int j = 0; j < kJoints; ++j)
          for (int d = 0; d < 3; ++d) gt[j * 3 + d] += dtheta[j][d];
      }
      if (nb >= 0) {
        double* gb = tape.grad_buf(nb).data();
        for (int k = 0; k < kShapes; ++k) {
          double s = 0;
          for (int64_t i = 0; i < n * 3; ++i) s += dvb[i] * tm->shape_basis[k * n * 3 + i];
          for (int j = 0; j < kJoints; ++j)
            for (int d = 0; d < 3; ++d)
              s += djrest[j][d] * tm->joint_basis[(k * kJoints + j) * 3 + d];
          gb[k] += s;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Template file: magic, version, then named little-endian sections.

namespace {

constexpr char kMagic[8] = {'M', 'P', 'T', 'P', 'L', '0', '0', '1'};

template <typename T>
void write_section(std::ofstream& os, const std::string& name, uint8_t dtype,
                   const std::vector<T>& data) {
  uint32_t nlen = static_cast<uint32_t>(name.size());
  os.write(reinterpret_cast<const char*>(&nlen), 4);
  os.write(name.data(), nlen);
  os.write(reinterpret_cast<const char*>(&dtype), 1);
  uint64_t count = data.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  os.write(reinterpret_cast<const char*>(data.data()), sizeof(T) * data.size());
}

struct SectionHeader {
  std::string name;
  uint8_t dtype = 0;
  uint64_t count = 0;
};

bool read_header(std::ifstream& is, SectionHeader& h) {
  uint32_t nlen = 0;
  if (!is.read(reinterpret_cast<char*>(&nlen), 4)) return false;
  h.name.resize(nlen);
  is.read(h.name.data(), nlen);
  is.read(reinterpret_cast<char*>(&h.dtype), 1);
  is.read(reinterpret_cast<char*>(&h.count), 8);
  return static_cast<bool>(is);
}

}  // namespace

void save_template(const BodyTemplate& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "save_template: cannot open " + path);
  os.write(kMagic, 8);
  uint32_t n_sections = 11;
  os.write(reinterpret_cast<const char*>(&n_sections), 4);
  write_section(os, "verts", 0, t.verts);
  write_section(os, "faces", 1, t.faces);
  write_section(os, "joints", 0, t.joints);
  write_section(os, "parents", 1, t.parents);
  write_section(os, "skin_w", 0, t.skin_w);
  write_section(os, "shape_basis", 0, t.shape_basis);
  write_section(os, "joint_basis", 0, t.joint_basis);
  write_section(os, "vert_bone", 1, t.vert_bone);
  write_section(os, "vert_ring", 1, t.vert_ring);
  write_section(os, "vert_azim", 1, t.vert_azim);
  write_section(os, "vert_t", 0, t.vert_t);
  check(os.good(), "save_template: write failed for " + path);
}

BodyTemplate load_template(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "load_template: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  check(is.good() && std::memcmp(magic, kMagic, 8) == 0, "load_template: bad magic in " + path);
  uint32_t n_sections = 0;
  is.read(reinterpret_cast<char*>(&n_sections), 4);
  BodyTemplate t;
  for (uint32_t s = 0; s < n_sections; ++s) {
    SectionHeader h;
    check(read_header(is, h), "load_template: truncated section header");
    auto read_f32 = [&](std::vector<float>& dst) {
      check(h.dtype == 0, "load_template: dtype mismatch in " + h.name);
      dst.resize(h.count);
      is.read(reinterpret_cast<char*>(dst.data()), sizeof(float) * h.count);
    };
    auto read_i32 = [&](std::vector<int32_t>& dst) {
      check(h.dtype == 1, "load_template: dtype mismatch in " + h.name);
      dst.resize(h.count);
      is.read(reinterpret_cast<char*>(dst.data()), sizeof(int32_t) * h.count);
    };
    if (h.name == "verts") read_f32(t.verts);
    else if (h.name == "faces") read_i32(t.faces);
    else if (h.name == "joints") read_f32(t.joints);
    else if (h.name == "parents") read_i32(t.parents);
    else if (h.name == "skin_w") read_f32(t.skin_w);
    else if (h.name == "shape_basis") read_f32(t.shape_basis);
    else if (h.name == "joint_basis") read_f32(t.joint_basis);
    else if (h.name == "vert_bone") read_i32(t.vert_bone);
    else if (h.name == "vert_ring") read_i32(t.vert_ring);
    else if (h.name == "vert_azim") read_i32(t.vert_azim);
    else if (h.name == "vert_t") read_f32(t.vert_t);
    else fail("load_template: unknown section " + h.name);
  }
  check(is.good(), "load_template: truncated payload in " + path);
  return t;
}

}  // namespace meshpose::body
