// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "meshpose/nn.hpp"
#include "meshpose/raster.hpp"

// Mesh graph and the lift / 3D-process / project block. Vertices are graph
// nodes; i~j iff they share a triangle. The propagation operator is the
// row-normalized A+I (raw binary adjacency is unstable under depth), applied
// as Ahat * (X * W) then ReLU then per-channel instance norm over vertices.

namespace meshpose::graph {

struct MeshGraph {
  int64_t n = 0;
  // CSR of Ahat = rownorm(A + I), and of its transpose for the backward pass.
  std::vector<int32_t> rowptr, cols;
  std::vector<double> vals;
  std::vector<int32_t> rowptr_t, cols_t;
  std::vector<double> vals_t;
  std::vector<int32_t> degree;  // of A, self-loop excluded

  template <typename T>
  std::vector<T> vals_as() const {
    return std::vector<T>(vals.begin(), vals.end());
  }
};

MeshGraph build_graph(const std::vector<int32_t>& faces, int64_t n_verts);

// y = Ahat * x, recorded; backward applies the transpose.
template <typename T>
Tensor<T> graph_propagate(const MeshGraph& g, const Tensor<T>& x) {
  check(x.rank() == 2 && x.dim(0) == g.n,
        "graph_propagate: want [N,C] with N=" + std::to_string(g.n) + ", got " +
            shape_str(x.shape()));
  const int64_t c = x.dim(1);
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  std::vector<T> vals(g.vals.begin(), g.vals.end());
  kern::get<T>().spmm(g.rowptr.data(), g.cols.data(), vals.data(), x.data(), y.data(), g.n, c);
  if (active_tape<T>() != nullptr && x.requires_grad()) {
    Tape<T>& tp = *active_tape<T>();
    int nx = tp.ensure_node(x);
    y.set_requires_grad(true);
    const MeshGraph* gp = &g;
    tp.record(y, [nx, gp, c](Tape<T>& t, const T* gout) {
      std::vector<T> vt(gp->vals_t.begin(), gp->vals_t.end());
      std::vector<T> gx(gp->n * c);
      kern::get<T>().spmm(gp->rowptr_t.data(), gp->cols_t.data(), vt.data(), gout, gx.data(),
                          gp->n, c);
      kern::get<T>().axpy(T(1), gx.data(), t.grad_buf(nx).data(), gp->n * c);
    });
  }
  return y;
}

template <typename T>
struct GraphConvLayer {
  Tensor<T> weight;    // [Cin, Cout]
  Tensor<T> in_scale;  // [Cout], init 1
  Tensor<T> in_shift;  // [Cout], init 0

  GraphConvLayer() = default;
  GraphConvLayer(int64_t cin, int64_t cout, RngStream& rng)
      : weight(nn::init_uniform<T>({cin, cout}, cin, rng)),
        in_scale(Tensor<T>::full({cout}, T(1))),
        in_shift(Tensor<T>::zeros({cout})) {
    in_scale.set_requires_grad(true);
    in_shift.set_requires_grad(true);
  }

  void collect(const std::string& prefix, nn::NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".in_scale", &in_scale);
    out.emplace_back(prefix + ".in_shift", &in_shift);
  }
};

// MeshIN(ReLU(Ahat X W))
template <typename T>
Tensor<T> graph_conv(const Tensor<T>& x, const MeshGraph& g, const GraphConvLayer<T>& layer) {
  auto h = graph_propagate(g, matmul(x, layer.weight));
  return nn::mesh_instance_norm(relu(h), layer.in_scale, layer.in_shift);
}

// Four graph-conv layers; layer 1 maps C+6 -> C, layers 2..4 run C -> C with
// residual connections.
template <typename T>
struct LPBlock {
  std::vector<GraphConvLayer<T>> layers;
  int64_t scale = 0;     // feature pyramid level this block serves
  int64_t channels = 0;  // C at this scale

  LPBlock() = default;
  LPBlock(int64_t c, int64_t scale_idx, RngStream& rng) : scale(scale_idx), channels(c) {
    layers.emplace_back(c + 6, c, rng);
    for (int i = 0; i < 3; ++i) layers.emplace_back(c, c, rng);
  }

  void collect(const std::string& prefix, nn::NamedParams<T>& out) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".gc" + std::to_string(i), out);
  }
};

// The 3D-processing stack on node features [N, C+6] -> [N, C].
template <typename T>
Tensor<T> lpb_process(const LPBlock<T>& block, const MeshGraph& g, const Tensor<T>& x) {
  Tensor<T> h = graph_conv(x, g, block.layers[0]);
  for (size_t i = 1; i < block.layers.size(); ++i)
    h = add(h, graph_conv(h, g, block.layers[i]));
  return h;
}

// Per-vertex geometry features: root-relative coordinates of both meshes.
template <typename T>
Tensor<T> mesh_coord_features(const body::BodyMesh& mesh) {
  const int64_t n = static_cast<int64_t>(mesh.verts_rel.size()) / 3;
  Tensor<T> t = Tensor<T>::zeros({n, 3});
  for (int64_t i = 0; i < n * 3; ++i) t.data()[i] = static_cast<T>(mesh.verts_rel[i]);
  return t;
}

// Lift: sample the source feature map at each vertex projection.
template <typename T>
Tensor<T> lift_features(const Tensor<T>& fmap, const body::BodyMesh& mesh_s,
                        const std::array<double, 3>& cam_s) {
  check(fmap.rank() == 3, "lift_features: want [C,H,W]");
  const int64_t h = fmap.dim(1), w = fmap.dim(2);
  const int64_t n = static_cast<int64_t>(mesh_s.verts.size()) / 3;
  std::vector<double> pts(n * 2);
  body::project(mesh_s.verts.data(), n, cam_s, w, h, pts.data());
  Tensor<T> p = Tensor<T>::zeros({n, 2});
  for (int64_t i = 0; i < n * 2; ++i) p.data()[i] = static_cast<T>(pts[i]);
  return nn::bilinear_sample(fmap, p);
}

// One full lifting-and-projection block at this block's scale: lift from the
// source view, process over the mesh graph, rasterize into the target view.
// With use_3dp=false the lifted features are projected unchanged (the
// "no 3D processing" ablation).
template <typename T>
Tensor<T> lpb_forward(const LPBlock<T>& block, const MeshGraph& g, const Tensor<T>& fmap_src,
                      const body::BodyMesh& mesh_s, const body::BodyMesh& mesh_t,
                      const std::array<double, 3>& cam_s, const std::array<double, 3>& cam_t,
                      bool use_3dp = true) {
  const int64_t h = fmap_src.dim(1), w = fmap_src.dim(2);
  Tensor<T> m = lift_features(fmap_src, mesh_s, cam_s);
  Tensor<T> feats;
  if (use_3dp) {
    auto vs = mesh_coord_features<T>(mesh_s);
    auto vt = mesh_coord_features<T>(mesh_t);
    feats = lpb_process(block, g, concat<T>({vs, vt, m}, 1));
  } else {
    feats = m;
  }
  return raster::rasterize(feats, mesh_t, cam_t, h, w);
}

}  // namespace meshpose::graph
