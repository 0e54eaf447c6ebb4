// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshpose {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

namespace detail {
inline uint64_t next_uid() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// vector allocator that skips zero-initialization on resize; kernels that
// fully overwrite their output use it through Tensor::uninit.
template <typename T>
struct DefaultInitAlloc : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = DefaultInitAlloc<U>;
  };
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

}  // namespace detail

template <typename T>
using RawBuffer = std::vector<T, detail::DefaultInitAlloc<T>>;

// Dense row-major tensor. The buffer is shared between copies; all ops treat
// tensors as immutable once created (the optimizer mutates parameter buffers
// in place, but only between tapes). `uid` identifies the buffer so gradients
// can be looked up after backward.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.st_ = std::make_shared<Storage>();
    t.st_->v.assign(numel_of(t.shape_), T(0));
    return t;
  }

  // Uninitialized buffer: only for outputs the producer fully overwrites.
  static Tensor uninit(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.st_ = std::make_shared<Storage>();
    t.st_->v.resize(numel_of(t.shape_));
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = uninit(std::move(shape));
    for (T& x : t.st_->v) x = value;
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  template <typename Buffer>
  static Tensor from_data(Shape shape, const Buffer& data) {
    check(numel_of(shape) == static_cast<int64_t>(data.size()),
          "from_data: shape " + shape_str(shape) + " does not match buffer size " +
              std::to_string(data.size()));
    Tensor t = uninit(std::move(shape));
    std::copy(data.begin(), data.end(), t.st_->v.begin());
    return t;
  }

  static Tensor from_data(Shape shape, std::initializer_list<T> data) {
    return from_data(shape, std::vector<T>(data));
  }

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_.at(i); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(st_ ? st_->v.size() : 0); }

  T* data() { return st_->v.data(); }
  const T* data() const { return st_->v.data(); }
  RawBuffer<T>& vec() { return st_->v; }
  const RawBuffer<T>& vec() const { return st_->v; }
  T item() const {
    check(numel() == 1, "item() on non-scalar tensor " + shape_str(shape_));
    return st_->v[0];
  }

  uint64_t uid() const { return st_ ? st_->uid : 0; }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool b) {
    requires_grad_ = b;
    return *this;
  }

  // Same buffer, detached from any gradient flow.
  Tensor detach() const {
    Tensor t = *this;
    t.requires_grad_ = false;
    return t;
  }

  // Deep copy with a fresh uid.
  Tensor clone() const {
    Tensor t = from_data(shape_, st_->v);
    t.requires_grad_ = requires_grad_;
    return t;
  }

  // Same buffer under a different shape (numel must match).
  Tensor reshaped_view(Shape s) const {
    check(numel_of(s) == numel(), "reshape " + shape_str(shape_) + " -> " + shape_str(s));
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

 private:
  struct Storage {
    RawBuffer<T> v;
    uint64_t uid = detail::next_uid();
  };
  std::shared_ptr<Storage> st_;
  Shape shape_;
  bool requires_grad_ = false;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace meshpose
