// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/graph.hpp"

#include <algorithm>
#include <set>

namespace meshpose::graph {

MeshGraph build_graph(const std::vector<int32_t>& faces, int64_t n_verts) {
  MeshGraph g;
  g.n = n_verts;
  std::vector<std::set<int32_t>> adj(n_verts);
  for (size_t f = 0; f * 3 < faces.size(); ++f) {
    const int32_t* tri = faces.data() + f * 3;
    for (int e = 0; e < 3; ++e) {
      check(tri[e] >= 0 && tri[e] < n_verts,
            "build_graph: face index " + std::to_string(tri[e]) + " out of range");
      for (int e2 = 0; e2 < 3; ++e2)
        if (e != e2) adj[tri[e]].insert(tri[e2]);
    }
  }
  g.degree.resize(n_verts);
  g.rowptr.assign(n_verts + 1, 0);
  for (int64_t i = 0; i < n_verts; ++i) {
    g.degree[i] = static_cast<int32_t>(adj[i].size());
    g.rowptr[i + 1] = g.rowptr[i] + g.degree[i] + 1;  // +1 self loop
  }
  g.cols.reserve(g.rowptr[n_verts]);
  g.vals.reserve(g.rowptr[n_verts]);
  for (int64_t i = 0; i < n_verts; ++i) {
    const double inv = 1.0 / (adj[i].size() + 1.0);
    g.cols.push_back(static_cast<int32_t>(i));  // self loop first
    g.vals.push_back(inv);
    for (int32_t j : adj[i]) {
      g.cols.push_back(j);
      g.vals.push_back(inv);
    }
  }

  // transpose (Ahat is not symmetric after row normalization)
  std::vector<int32_t> cnt(n_verts, 0);
  for (int32_t j : g.cols) cnt[j]++;
  g.rowptr_t.assign(n_verts + 1, 0);
  for (int64_t i = 0; i < n_verts; ++i) g.rowptr_t[i + 1] = g.rowptr_t[i] + cnt[i];
  g.cols_t.resize(g.cols.size());
  g.vals_t.resize(g.vals.size());
  std::vector<int32_t> fill(g.rowptr_t.begin(), g.rowptr_t.end() - 1);
  for (int64_t i = 0; i < n_verts; ++i)
    for (int32_t e = g.rowptr[i]; e < g.rowptr[i + 1]; ++e) {
      const int32_t j = g.cols[e];
      g.cols_t[fill[j]] = static_cast<int32_t>(i);
      g.vals_t[fill[j]] = g.vals[e];
      fill[j]++;
    }
  return g;
}

}  // namespace meshpose::graph
