// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace meshpose::kern {

enum class Backend { kAuto, kScalar, kAvx2 };

// Selects the kernel variant. kAuto picks AVX2 when the CPU supports it.
// Selecting kAvx2 on a CPU without it throws.
void set_backend(Backend b);
Backend requested_backend();
// The variant actually dispatched to (never kAuto).
Backend active_backend();
bool avx2_supported();
const char* backend_name(Backend b);

// Fixed worker count for deterministic static partitioning. 0 = hardware.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over a static partition of [0, n). Each index is
// processed by exactly one worker, so results are schedule-independent as
// long as fn writes only to outputs derived from its own index range.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace meshpose::kern
