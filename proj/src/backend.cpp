// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/backend.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "meshpose/kernels.hpp"

namespace meshpose::kern {

namespace {

Backend g_requested = Backend::kAuto;
std::atomic<const Kernels<float>*> g_f32{nullptr};
int g_threads = 0;

const Kernels<float>* resolve(Backend b) {
  if (b == Backend::kScalar) return &scalar_f32();
  if (b == Backend::kAvx2) {
    if (!avx2_supported()) throw std::runtime_error("AVX2 not supported on this CPU");
    return &avx2_f32();
  }
  return avx2_supported() ? &avx2_f32() : &scalar_f32();
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

void set_backend(Backend b) {
  g_f32.store(resolve(b), std::memory_order_release);
  g_requested = b;
}

Backend requested_backend() { return g_requested; }

Backend active_backend() {
  const Kernels<float>* t = g_f32.load(std::memory_order_acquire);
  if (t == nullptr) t = resolve(Backend::kAuto);
  return t == (avx2_supported() ? &avx2_f32() : nullptr) ? Backend::kAvx2 : Backend::kScalar;
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::kAuto: return "auto";
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
  }
  return "?";
}

template <>
const Kernels<float>& get<float>() {
  const Kernels<float>* t = g_f32.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = resolve(Backend::kAuto);
    g_f32.store(t, std::memory_order_release);
  }
  return *t;
}

// f64 is the verification dtype; it always runs the scalar reference path.
template <>
const Kernels<double>& get<double>() {
  return scalar_f64();
}

// ---------------------------------------------------------------------------
// Deterministic static-partition thread pool.

namespace {

class Pool {
 public:
  explicit Pool(int workers) {
    for (int w = 0; w < workers; ++w)
      threads_.emplace_back([this, w] { worker_loop(w); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int workers() const { return static_cast<int>(threads_.size()); }

  // Runs fn on all workers with ids [1, workers]; caller runs id 0.
  void run(const std::function<void(int)>& fn) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      task_ = &fn;
      ++epoch_;
      pending_ = workers();
    }
    cv_.notify_all();
    fn(0);
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    task_ = nullptr;
  }

 private:
  void worker_loop(int idx) {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* task = nullptr;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
        if (stop_) return;
        seen = epoch_;
        task = task_;
      }
      (*task)(idx + 1);
      {
        std::lock_guard<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int)>* task_ = nullptr;
  uint64_t epoch_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

Pool* g_pool = nullptr;
thread_local bool g_in_parallel = false;

int resolved_threads() {
  if (g_threads > 0) return g_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

void set_num_threads(int n) {
  delete g_pool;
  g_pool = nullptr;
  g_threads = n;
}

int num_threads() { return resolved_threads(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int nt = resolved_threads();
  if (nt > n) nt = static_cast<int>(n);
  // Small ranges and nested calls run inline; the partition of work per index
  // is unchanged either way.
  if (nt <= 1 || n < 128 || g_in_parallel) {
    fn(0, n);
    return;
  }
  if (g_pool == nullptr || g_pool->workers() != nt - 1) {
    delete g_pool;
    g_pool = new Pool(nt - 1);
  }
  const int64_t chunk = (n + nt - 1) / nt;
  g_pool->run([&](int id) {
    g_in_parallel = true;
    int64_t b = chunk * id;
    int64_t e = b + chunk < n ? b + chunk : n;
    if (b < e) fn(b, e);
    g_in_parallel = false;
  });
}

}  // namespace meshpose::kern
