// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <unordered_map>
#include <vector>

#include "meshpose/tensor.hpp"

namespace meshpose {

// Reverse-mode tape. Nodes are appended in recording order; backward walks
// them in exact reverse order and accumulates gradients additively, so a
// fixed forward pass yields a bit-reproducible backward pass.
//
// The tape is single-owner and single-threaded: one tape per training phase,
// bound via TapeScope. Ops record themselves only while a tape is bound and
// at least one input requires a gradient.
template <typename T>
class Tape {
 public:
  struct Node {
    // Accumulates into parent gradients; `gout` is this node's gradient.
    std::function<void(Tape&, const T* gout)> backward;
    Shape shape;
    bool is_leaf = false;
    uint64_t uid = 0;  // for leaves
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  // Node id for a tensor, registering it as a leaf if unseen. Only call for
  // tensors that participate in gradient flow.
  int ensure_node(const Tensor<T>& t) {
    auto it = node_of_.find(t.uid());
    if (it != node_of_.end()) return it->second;
    Node n;
    n.is_leaf = true;
    n.uid = t.uid();
    n.shape = t.shape();
    nodes_.push_back(std::move(n));
    int id = size() - 1;
    node_of_.emplace(t.uid(), id);
    return id;
  }

  // Looks up an existing node (-1 if the tensor never joined the graph).
  int node_of(const Tensor<T>& t) const {
    auto it = node_of_.find(t.uid());
    return it == node_of_.end() ? -1 : it->second;
  }

  int record(const Tensor<T>& out, std::function<void(Tape&, const T*)> backward) {
    Node n;
    n.backward = std::move(backward);
    n.shape = out.shape();
    n.uid = out.uid();
    nodes_.push_back(std::move(n));
    int id = size() - 1;
    node_of_.emplace(out.uid(), id);
    return id;
  }

  // Gradient buffer for a node, allocated on first touch.
  std::vector<T>& grad_buf(int node) {
    auto& g = grads_[node];
    if (g.empty()) g.assign(numel_of(nodes_[node].shape), T(0));
    return g;
  }

  bool has_grad(int node) const {
    auto it = grads_.find(node);
    return it != grads_.end() && !it->second.empty();
  }

  // Runs reverse accumulation from a scalar loss. Returns gradients for every
  // leaf that participated; query via GradMap which zero-fills absentees.
  void backward(const Tensor<T>& loss) {
    check(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape()));
    int ln = node_of(loss);
    check(ln >= 0, "backward: loss is not on the tape");
    check(std::isfinite(static_cast<double>(loss.item())), "backward: loss is not finite");
    grad_buf(ln)[0] = T(1);
    for (int i = size() - 1; i >= 0; --i) {
      if (!nodes_[i].backward) continue;
      auto it = grads_.find(i);
      if (it == grads_.end()) continue;  // no gradient flowed here
      nodes_[i].backward(*this, it->second.data());
    }
  }

  // Gradient of a leaf tensor after backward(); zeros if it never
  // participated in the loss.
  Tensor<T> grad_of(const Tensor<T>& t) {
    int id = node_of(t);
    if (id < 0 || !has_grad(id)) return Tensor<T>::zeros(t.shape());
    return Tensor<T>::from_data(nodes_[id].shape, grads_[id]);
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<uint64_t, int> node_of_;
  std::unordered_map<int, std::vector<T>> grads_;
};

namespace detail {
template <typename T>
Tape<T>*& current_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
}  // namespace detail

template <typename T>
Tape<T>* active_tape() {
  return detail::current_tape<T>();
}

// RAII binding of the thread's active tape.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(detail::current_tape<T>()) {
    detail::current_tape<T>() = &tape;
  }
  ~TapeScope() { detail::current_tape<T>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

}  // namespace meshpose
