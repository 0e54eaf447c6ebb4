// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "meshpose/body.hpp"
#include "meshpose/rng.hpp"
#include "meshpose/tensor.hpp"

// Procedural paired dataset: seeded figures (per-vertex colors with
// high-frequency stripe/checker detail), seeded gradient-plus-noise
// backgrounds, pose/camera sampling within anatomical limits, rendering
// through the project's own rasterizer, and a JSONL manifest whose records
// regenerate every frame bit-exactly.

namespace meshpose::data {

struct DatasetConfig {
  int64_t resolution = 64;
  int figures = 4;
  int backgrounds = 2;
  int train_poses_per_figure = 100;
  int test_poses_per_figure = 20;
  uint64_t seed = 17;
};

struct FigureAppearance {
  std::vector<float> colors;  // N*3 in [0,1]
};

// Deterministic per (template, dataset seed, figure id): part base colors
// plus stripe or checker accents keyed to ring/azimuth indices.
FigureAppearance make_appearance(const body::BodyTemplate& t, uint64_t dataset_seed,
                                 int figure_id);

// Full-frame background in (-1,1): two-color diagonal gradient plus hash
// noise, deterministic per (seed, id).
std::vector<float> make_background(uint64_t dataset_seed, int background_id, int64_t h,
                                   int64_t w);

// Per-joint axis-angle within fixed anatomical limits (scaled by
// limit_scale), free root yaw, plus a weak-perspective camera draw.
body::BodyParams sample_pose(RngStream& rng, double limit_scale = 1.0);

struct SceneSample {
  std::vector<uint8_t> image;  // H*W*3, quantized as stored in the PNG
  std::vector<uint8_t> mask;   // H*W in {0,1}
  body::BodyParams params;
  int figure_id = 0;
  int background_id = 0;
};

SceneSample render_sample(const body::BodyTemplate& t, const FigureAppearance& fig,
                          const body::BodyParams& params, const std::vector<float>& background,
                          int64_t resolution);

struct SampleRecord {
  std::string image_path, mask_path;
  std::string split;  // "train" | "test"
  int figure_id = 0, background_id = 0;
  body::BodyParams params;
};

struct Dataset {
  DatasetConfig cfg;
  std::string root;
  body::BodyTemplate tmpl;
  std::vector<SampleRecord> records;

  std::vector<const SampleRecord*> split(const std::string& name) const;
};

void generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);
Dataset load_dataset(const std::string& dir);

// [3,H,W] in (-1,1) from an 8-bit frame
Tensor<float> load_image(const std::string& path);
std::vector<uint8_t> load_mask(const std::string& path);

// Source/target pair stream. Self-transfer pairs share a figure; cross pairs
// take the target pose from a different figure (the target mesh then combines
// the source shape with that pose).
enum class PairMode { kSelf, kCross };

struct Pair {
  const SampleRecord* source;
  const SampleRecord* target;
};

class PairSampler {
 public:
  PairSampler(const Dataset& ds, PairMode mode, const std::string& split, uint64_t seed);
  Pair next();
  // Stateless draw: pair `index` of the stream, independent of history.
  Pair at(uint64_t index) const;

 private:
  PairMode mode_;
  uint64_t seed_;
  uint64_t cursor_ = 0;
  std::vector<std::vector<const SampleRecord*>> by_figure_;
};

}  // namespace meshpose::data
