// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshpose/adam.hpp"
#include "meshpose/tensor.hpp"

// Checkpoint file: magic, format version, config hash, step counter, then a
// named little-endian f32 tensor table carrying parameters and optimizer
// moments. save -> load -> save is byte-identical.

namespace meshpose::train {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  uint64_t config_hash = 0;
  uint64_t step = 0;
  uint64_t adam_g_step = 0;
  uint64_t adam_d_step = 0;
  std::vector<NamedTensor> tensors;  // fixed order: save order = load order

  const Tensor<float>* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Packs parameters plus both optimizers (moment tensors ride along under
// "adam_g." / "adam_d." prefixes).
Checkpoint pack_checkpoint(uint64_t config_hash, uint64_t step,
                           const NamedParams<float>& g_params,
                           const NamedParams<float>& d_params, const AdamState<float>& adam_g,
                           const AdamState<float>& adam_d);

// Restores parameter buffers and optimizer state in place; throws on any
// missing tensor or shape mismatch.
void unpack_checkpoint(const Checkpoint& ck, const NamedParams<float>& g_params,
                       const NamedParams<float>& d_params, AdamState<float>& adam_g,
                       AdamState<float>& adam_d);

}  // namespace meshpose::train
