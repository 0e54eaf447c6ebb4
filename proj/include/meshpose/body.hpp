// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "meshpose/tensor.hpp"

// Procedural articulated body: a 24-joint SMPL-compatible kinematic tree with
// 10 linear shape knobs, skinned tube geometry, linear blend skinning and a
// weak-perspective camera. Stands in for licensed SMPL assets with the same
// parameter interface at reduced vertex count.

namespace meshpose::body {

constexpr int kJoints = 24;
constexpr int kShapes = 10;

// parent[j] < j for every non-root joint.
extern const std::array<int, kJoints> kParent;

struct TemplateConfig {
  int rings_per_bone = 7;  // rings per bone tube
  int ring_res = 6;        // vertices per ring (>= 3)
  bool coarse = false;     // 12 six-vertex bipyramid segments (72 verts), for tests
  uint64_t seed = 0;       // perturbs proportions, never topology
};

struct BodyTemplate {
  std::vector<float> verts;        // N*3 rest vertices
  std::vector<int32_t> faces;      // F*3
  std::vector<float> joints;       // 24*3 rest joint positions
  std::vector<int32_t> parents;    // 24
  std::vector<float> skin_w;       // N*24, rows sum to 1, <= 2 nonzeros
  std::vector<float> shape_basis;  // 10*N*3: d verts / d beta_k (exact, generator is linear)
  std::vector<float> joint_basis;  // 10*24*3
  // generation metadata, consumed by the appearance painter
  std::vector<int32_t> vert_bone;  // segment id per vertex
  std::vector<int32_t> vert_ring;  // ring index (poles get the nearest ring)
  std::vector<int32_t> vert_azim;  // position around the ring, -1 for poles
  std::vector<float> vert_t;       //.. along the bone in [0,1]

  int64_t n_verts() const { return static_cast<int64_t>(verts.size()) / 3; }
  int64_t n_faces() const { return static_cast<int64_t>(faces.size()) / 3; }
};

struct BodyParams {
  std::array<double, kJoints * 3> theta{};  // axis-angle per joint
  std::array<double, kShapes> beta{};
  std::array<double, 3> cam{1.0, 0.0, 0.0};  // (s, tx, ty), s > 0
};

struct BodyMesh {
  std::vector<double> verts;      // N*3 posed
  std::vector<double> verts_rel;  // N*3, root-joint-centered
  std::array<double, 3> root{};   // posed root joint position
  const BodyTemplate* tmpl = nullptr;
};

BodyTemplate make_template(const TemplateConfig& cfg = {});

void save_template(const BodyTemplate& t, const std::string& path);
BodyTemplate load_template(const std::string& path);

// Linear blend skinning: shaped rest mesh, Rodrigues forward kinematics down
// the tree, vertex blend over joint transforms.
BodyMesh lbs(const BodyTemplate& t, const double* theta, const double* beta);
inline BodyMesh lbs(const BodyTemplate& t, const BodyParams& p) {
  return lbs(t, p.theta.data(), p.beta.data());
}

// Weak perspective projection to continuous pixel-center coordinates:
// ndc = s*(x,y) + (tx,ty); ndc [-1,1] maps to [0, W-1] x [0, H-1], y down.
void project(const double* verts, int64_t n, const std::array<double, 3>& cam, int64_t w,
             int64_t h, double* pts_out);
std::vector<double> project(const BodyMesh& mesh, const std::array<double, 3>& cam, int64_t w,
                            int64_t h);

// Differentiable LBS for the gradient suites (f64): records d verts / d theta
// and d verts / d beta on the tape. The training pipeline treats body params
// as constants and uses the plain lbs above.
Tensor<double> lbs_op(const BodyTemplate& t, const Tensor<double>& theta,
                      const Tensor<double>& beta);

// Rodrigues helpers (exposed for tests).
void rodrigues(const double* k, double* r9);
void rodrigues_vjp(const double* k, const double* dr9, double* dk3);

}  // namespace meshpose::body
