// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "meshpose/data.hpp"
#include "meshpose/png.hpp"
#include "meshpose/raster.hpp"

using namespace meshpose;
using namespace meshpose::data;
namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::path("tmp_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

DatasetConfig small_config() {
  DatasetConfig cfg;
  cfg.resolution = 32;
  cfg.figures = 2;
  cfg.backgrounds = 2;
  cfg.train_poses_per_figure = 6;
  cfg.test_poses_per_figure = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("sample_pose: zero limits give the rest pose; fixed seed repeats") {
  RngStream rng(1, "pose");
  auto p = sample_pose(rng, 0.0);
  for (double v : p.theta) CHECK(v == 0.0);
  CHECK(p.cam[0] > 0);

  RngStream a(2, "pose"), b(2, "pose");
  for (int i = 0; i < 5; ++i) {
    auto pa = sample_pose(a), pb = sample_pose(b);
    CHECK(pa.theta == pb.theta);
    CHECK(pa.cam == pb.cam);
  }
}

TEST_CASE("appearance: valid colors, deterministic, distinct per figure") {
  auto t = body::make_template();
  auto f0 = make_appearance(t, 9, 0);
  auto f0b = make_appearance(t, 9, 0);
  auto f1 = make_appearance(t, 9, 1);
  CHECK(f0.colors == f0b.colors);
  CHECK(f0.colors != f1.colors);
  for (float c : f0.colors) {
    CHECK(c >= 0.0f);
    CHECK(c <= 1.0f);
  }
  // high-frequency detail exists: neighbors along a ring differ somewhere
  CHECK(f0.colors.size() == size_t(t.n_verts() * 3));
}

TEST_CASE("background: deterministic, in range, distinct ids differ") {
  auto a = make_background(3, 0, 32, 32);
  auto b = make_background(3, 0, 32, 32);
  auto c = make_background(3, 1, 32, 32);
  CHECK(a == b);
  CHECK(a != c);
  for (float v : a) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("render_sample: compositing, mask identity, determinism") {
  auto t = body::make_template();
  auto fig = make_appearance(t, 4, 0);
  auto bgp = make_background(4, 0, 32, 32);
  RngStream rng(6, "rp");
  auto params = sample_pose(rng);

  auto s1 = render_sample(t, fig, params, bgp, 32);
  auto s2 = render_sample(t, fig, params, bgp, 32);
  CHECK(s1.image == s2.image);
  CHECK(s1.mask == s2.mask);

  auto mesh = body::lbs(t, params);
  auto sil = raster::render_silhouette(mesh, params.cam, 32, 32);
  CHECK(s1.mask == sil);

  // background region equals the quantized background bit-exactly
  for (int64_t pix = 0; pix < 32 * 32; ++pix) {
    if (s1.mask[pix]) continue;
    for (int c = 0; c < 3; ++c) {
      float v = bgp[c * 32 * 32 + pix];
      uint8_t want = static_cast<uint8_t>(
          std::min(255.0f, std::max(0.0f, std::round((v + 1.0f) * 0.5f * 255.0f))));
      CHECK(s1.image[pix * 3 + c] == want);
    }
  }
}

TEST_CASE("dataset: manifest records regenerate stored frames bit-exactly") {
  TmpDir dir("dataset_roundtrip");
  auto cfg = small_config();
  generate_dataset(cfg, dir.path.string());
  auto ds = load_dataset(dir.path.string());
  CHECK(ds.records.size() ==
        size_t(cfg.figures * (cfg.train_poses_per_figure + cfg.test_poses_per_figure)));
  CHECK(ds.tmpl.n_verts() == 1032);

  std::vector<std::vector<float>> bgs;
  for (int b = 0; b < cfg.backgrounds; ++b)
    bgs.push_back(make_background(cfg.seed, b, cfg.resolution, cfg.resolution));
  for (const auto& rec : ds.records) {
    auto fig = make_appearance(ds.tmpl, cfg.seed, rec.figure_id);
    auto re = render_sample(ds.tmpl, fig, rec.params, bgs[rec.background_id], cfg.resolution);
    auto stored = file_bytes(rec.image_path);
    auto fresh = png::encode({cfg.resolution, cfg.resolution, 3, re.image});
    CHECK(stored == fresh);
  }
}

TEST_CASE("dataset: silhouette areas stay within the training-signal bounds") {
  TmpDir dir("dataset_area");
  auto cfg = small_config();
  cfg.train_poses_per_figure = 20;
  generate_dataset(cfg, dir.path.string());
  auto ds = load_dataset(dir.path.string());
  const double hw = double(cfg.resolution) * cfg.resolution;
  for (const auto& rec : ds.records) {
    auto mask = load_mask(rec.mask_path);
    int64_t area = 0;
    for (uint8_t v : mask) area += v;
    CHECK(area / hw >= 0.03);
    CHECK(area / hw <= 0.60);
  }
}

TEST_CASE("pair sampler: modes, determinism, history-free indexing") {
  TmpDir dir("dataset_pairs");
  auto cfg = small_config();
  generate_dataset(cfg, dir.path.string());
  auto ds = load_dataset(dir.path.string());

  PairSampler self(ds, PairMode::kSelf, "train", 11);
  for (int i = 0; i < 30; ++i) {
    auto pr = self.next();
    CHECK(pr.source->figure_id == pr.target->figure_id);
    CHECK(pr.source != pr.target);
    CHECK(pr.source->split == "train");
  }
  PairSampler cross(ds, PairMode::kCross, "train", 11);
  for (int i = 0; i < 30; ++i) {
    auto pr = cross.next();
    CHECK(pr.source->figure_id != pr.target->figure_id);
  }
  PairSampler s1(ds, PairMode::kSelf, "train", 13);
  PairSampler s2(ds, PairMode::kSelf, "train", 13);
  for (int i = 0; i < 20; ++i) {
    auto a = s1.next();
    auto b = s2.at(i);
    CHECK(a.source == b.source);
    CHECK(a.target == b.target);
  }
}

TEST_CASE("png codec round trip") {
  RngStream rng(21, "png");
  png::Image img{13, 9, 3, {}};
  img.data.resize(13 * 9 * 3);
  for (auto& b : img.data) b = static_cast<uint8_t>(rng.uniform_index(256));
  auto bytes = png::encode(img);
  auto back = png::decode(bytes);
  CHECK(back.w == img.w);
  CHECK(back.h == img.h);
  CHECK(back.channels == 3);
  CHECK(back.data == img.data);

  png::Image gray{7, 5, 1, {}};
  gray.data.resize(35);
  for (auto& b : gray.data) b = static_cast<uint8_t>(rng.uniform_index(256));
  CHECK(png::decode(png::encode(gray)).data == gray.data);
}
