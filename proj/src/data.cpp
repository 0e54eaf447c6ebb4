// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/data.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "meshpose/png.hpp"
#include "meshpose/raster.hpp"
#include "meshpose/rng.hpp"

namespace meshpose::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

uint8_t quantize(float v) {  // (-1,1) -> u8
  float t = (v + 1.0f) * 0.5f * 255.0f;
  t = std::round(t);
  if (t < 0) t = 0;
  if (t > 255) t = 255;
  return static_cast<uint8_t>(t);
}

float dequantize(uint8_t b) { return float(b) / 255.0f * 2.0f - 1.0f; }

double hash01(uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = fnv1a("bgnoise", 0xcbf29ce484222325ull ^ (a * 0x9e3779b97f4a7c15ull));
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return double(h >> 11) * 0x1.0p-53;
}

// per-joint symmetric axis-angle limits, radians
const double kPoseLimits[body::kJoints][3] = {
    {0.25, M_PI, 0.25},  // 0 root: free yaw about the vertical axis
    {0.8, 0.3, 0.4},     // 1 l_hip
    {0.8, 0.3, 0.4},     // 2 r_hip
    {0.2, 0.2, 0.2},     // 3 spine1
    {1.3, 0.05, 0.05},   // 4 l_knee
    {1.3, 0.05, 0.05},   // 5 r_knee
    {0.2, 0.2, 0.2},     // 6 spine2
    {0.3, 0.1, 0.1},     // 7 l_ankle
    {0.3, 0.1, 0.1},     // 8 r_ankle
    {0.15, 0.15, 0.15},  // 9 spine3
    {0.2, 0.1, 0.1},     // 10 l_foot
    {0.2, 0.1, 0.1},     // 11 r_foot
    {0.3, 0.3, 0.2},     // 12 neck
    {0.1, 0.1, 0.1},     // 13 l_collar
    {0.1, 0.1, 0.1},     // 14 r_collar
    {0.3, 0.3, 0.2},     // 15 head
    {0.5, 0.5, 0.6},     // 16 l_shoulder
    {0.5, 0.5, 0.6},     // 17 r_shoulder
    {0.3, 1.2, 0.3},     // 18 l_elbow
    {0.3, 1.2, 0.3},     // 19 r_elbow
    {0.3, 0.3, 0.3},     // 20 l_wrist
    {0.3, 0.3, 0.3},     // 21 r_wrist
    {0.2, 0.2, 0.2},     // 22 l_hand
    {0.2, 0.2, 0.2},     // 23 r_hand
};

json params_to_json(const body::BodyParams& p) {
  json j;
  j["theta"] = std::vector<double>(p.theta.begin(), p.theta.end());
  j["beta"] = std::vector<double>(p.beta.begin(), p.beta.end());
  j["cam"] = std::vector<double>(p.cam.begin(), p.cam.end());
  return j;
}

body::BodyParams params_from_json(const json& j) {
  body::BodyParams p;
  auto th = j.at("theta").get<std::vector<double>>();
  auto be = j.at("beta").get<std::vector<double>>();
  auto cm = j.at("cam").get<std::vector<double>>();
  check(th.size() == p.theta.size() && be.size() == p.beta.size() && cm.size() == 3,
        "manifest: bad parameter lengths");
  std::copy(th.begin(), th.end(), p.theta.begin());
  std::copy(be.begin(), be.end(), p.beta.begin());
  std::copy(cm.begin(), cm.end(), p.cam.begin());
  return p;
}

}  // namespace

FigureAppearance make_appearance(const body::BodyTemplate& t, uint64_t dataset_seed,
                                 int figure_id) {
  RngStream rng(dataset_seed ^ (uint64_t(figure_id) * 0x5851f42d4c957f2dull), "appearance");
  const int64_t n = t.n_verts();
  FigureAppearance fig;
  fig.colors.resize(n * 3);

  // one base/accent palette entry per segment, plus a figure-wide pattern
  const int pattern = static_cast<int>(rng.uniform_index(3));  // 0 rings, 1 checker, 2 azimuth
  int max_bone = 0;
  for (int32_t b : t.vert_bone) max_bone = std::max(max_bone, b);
  std::vector<float> base((max_bone + 1) * 3), accent((max_bone + 1) * 3);
  for (int b = 0; b <= max_bone; ++b)
    for (int c = 0; c < 3; ++c) {
      base[b * 3 + c] = static_cast<float>(rng.uniform(0.15, 0.95));
      accent[b * 3 + c] = static_cast<float>(rng.uniform(0.05, 0.95));
    }

  for (int64_t i = 0; i < n; ++i) {
    const int b = t.vert_bone[i];
    const int ring = t.vert_ring[i];
    const int azim = std::max(0, t.vert_azim[i]);
    bool on = false;
    switch (pattern) {
      case 0: on = (ring % 2) == 1; break;
      case 1: on = ((ring + azim) % 2) == 1; break;
      default: on = (azim % 2) == 1; break;
    }
    for (int c = 0; c < 3; ++c) {
      float v = on ? accent[b * 3 + c] : base[b * 3 + c];
      fig.colors[i * 3 + c] = std::min(1.0f, std::max(0.0f, v));
    }
  }
  return fig;
}

std::vector<float> make_background(uint64_t dataset_seed, int background_id, int64_t h,
                                   int64_t w) {
  RngStream rng(dataset_seed ^ (uint64_t(background_id) * 0xd6e8feb86659fd93ull), "background");
  float ca[3], cb[3];
  for (int c = 0; c < 3; ++c) {
    ca[c] = static_cast<float>(rng.uniform(-0.7, 0.7));
    cb[c] = static_cast<float>(rng.uniform(-0.7, 0.7));
  }
  std::vector<float> bg(3 * h * w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const float mix = float(x + y) / float(w + h - 2);
      const float noise =
          static_cast<float>(0.12 * (hash01(dataset_seed ^ background_id, y, x) - 0.5));
      for (int c = 0; c < 3; ++c) {
        float v = ca[c] * (1 - mix) + cb[c] * mix + noise;
        bg[c * h * w + y * w + x] = std::min(0.95f, std::max(-0.95f, v));
      }
    }
  return bg;
}

body::BodyParams sample_pose(RngStream& rng, double limit_scale) {
  body::BodyParams p;
  for (int j = 0; j < body::kJoints; ++j)
    for (int a = 0; a < 3; ++a) {
      const double lim = kPoseLimits[j][a] * limit_scale;
      p.theta[j * 3 + a] = rng.uniform(-lim, lim);
    }
  p.cam[0] = rng.uniform(0.55, 0.8);
  p.cam[1] = rng.uniform(-0.12, 0.12);
  p.cam[2] = rng.uniform(-0.1, 0.1);
  return p;
}

SceneSample render_sample(const body::BodyTemplate& t, const FigureAppearance& fig,
                          const body::BodyParams& params, const std::vector<float>& background,
                          int64_t res) {
  check(background.size() == size_t(3 * res * res), "render_sample: background size mismatch");
  auto mesh = body::lbs(t, params);
  raster::Geometry geom = raster::rasterize_geometry(mesh, params.cam, res, res);

  // barycentric vertex colors over the covered pixels
  auto colors = TensorF::zeros({t.n_verts(), 3});
  for (int64_t i = 0; i < colors.numel(); ++i) colors.data()[i] = fig.colors[i];
  auto fg = raster::rasterize_features(colors, geom, t.faces);

  SceneSample s;
  s.params = params;
  const int64_t hw = res * res;
  s.mask = geom.coverage;
  s.image.resize(3 * hw);
  for (int64_t pix = 0; pix < hw; ++pix)
    for (int c = 0; c < 3; ++c) {
      const float v = geom.coverage[pix] != 0 ? fg.data()[c * hw + pix] * 2.0f - 1.0f
                                              : background[c * hw + pix];
      // interleaved u8 rgb, the PNG layout
      s.image[pix * 3 + c] = quantize(v);
    }
  return s;
}

void generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "frames");
  body::TemplateConfig tcfg;
  tcfg.seed = cfg.seed;
  auto tmpl = body::make_template(tcfg);
  body::save_template(tmpl, (fs::path(out_dir) / "template.bin").string());

  json meta;
  meta["resolution"] = cfg.resolution;
  meta["figures"] = cfg.figures;
  meta["backgrounds"] = cfg.backgrounds;
  meta["train_poses_per_figure"] = cfg.train_poses_per_figure;
  meta["test_poses_per_figure"] = cfg.test_poses_per_figure;
  meta["seed"] = cfg.seed;
  {
    std::ofstream os(fs::path(out_dir) / "meta.json");
    os << meta.dump(2) << "\n";
  }

  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
  check(manifest.good(), "generate_dataset: cannot write manifest");

  const int64_t hw = cfg.resolution * cfg.resolution;
  std::vector<std::vector<float>> bgs;
  for (int b = 0; b < cfg.backgrounds; ++b)
    bgs.push_back(make_background(cfg.seed, b, cfg.resolution, cfg.resolution));

  for (int f = 0; f < cfg.figures; ++f) {
    auto fig = make_appearance(tmpl, cfg.seed, f);
    RngStream beta_rng(cfg.seed ^ (uint64_t(f) * 0xbf58476d1ce4e5b9ull), "figure_beta");
    std::array<double, body::kShapes> beta{};
    for (auto& b : beta) b = beta_rng.uniform(-1.2, 1.2);

    const int total = cfg.train_poses_per_figure + cfg.test_poses_per_figure;
    RngStream pose_rng(cfg.seed ^ (uint64_t(f) * 0x94d049bb133111ebull), "figure_pose");
    for (int s = 0; s < total; ++s) {
      body::BodyParams params;
      // redraw until the silhouette carries usable training signal
      for (int attempt = 0;; ++attempt) {
        params = sample_pose(pose_rng);
        params.beta = beta;
        auto mesh = body::lbs(tmpl, params);
        auto sil = raster::render_silhouette(mesh, params.cam, cfg.resolution, cfg.resolution);
        int64_t area = 0;
        for (uint8_t v : sil) area += v;
        const double frac = double(area) / double(hw);
        if (frac >= 0.035 && frac <= 0.6) break;
        check(attempt < 200, "generate_dataset: pose sampler failed to satisfy area bounds");
      }
      const int bg_id = (f * total + s) % cfg.backgrounds;
      auto sample = render_sample(tmpl, fig, params, bgs[bg_id], cfg.resolution);

      char img_name[64], mask_name[64];
      std::snprintf(img_name, sizeof img_name, "frames/f%02d_p%04d.png", f, s);
      std::snprintf(mask_name, sizeof mask_name, "frames/f%02d_p%04d_mask.png", f, s);
      png::write((fs::path(out_dir) / img_name).string(),
                 {cfg.resolution, cfg.resolution, 3, sample.image});
      std::vector<uint8_t> m255(hw);
      for (int64_t i = 0; i < hw; ++i) m255[i] = sample.mask[i] ? 255 : 0;
      png::write((fs::path(out_dir) / mask_name).string(),
                 {cfg.resolution, cfg.resolution, 1, m255});

      json rec = params_to_json(params);
      rec["image"] = img_name;
      rec["mask"] = mask_name;
      rec["figure"] = f;
      rec["background"] = bg_id;
      rec["split"] = s < cfg.train_poses_per_figure ? "train" : "test";
      manifest << rec.dump() << "\n";
    }
  }
  check(manifest.good(), "generate_dataset: manifest write failed");
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.root = dir;
  {
    std::ifstream is(fs::path(dir) / "meta.json");
    check(is.good(), "load_dataset: missing meta.json in " + dir);
    json meta = json::parse(is);
    ds.cfg.resolution = meta.at("resolution");
    ds.cfg.figures = meta.at("figures");
    ds.cfg.backgrounds = meta.at("backgrounds");
    ds.cfg.train_poses_per_figure = meta.at("train_poses_per_figure");
    ds.cfg.test_poses_per_figure = meta.at("test_poses_per_figure");
    ds.cfg.seed = meta.at("seed");
  }
  ds.tmpl = body::load_template((fs::path(dir) / "template.bin").string());
  std::ifstream is(fs::path(dir) / "manifest.jsonl");
  check(is.good(), "load_dataset: missing manifest.jsonl in " + dir);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    SampleRecord r;
    r.image_path = (fs::path(dir) / j.at("image").get<std::string>()).string();
    r.mask_path = (fs::path(dir) / j.at("mask").get<std::string>()).string();
    r.figure_id = j.at("figure");
    r.background_id = j.at("background");
    r.split = j.at("split");
    r.params = params_from_json(j);
    ds.records.push_back(std::move(r));
  }
  check(!ds.records.empty(), "load_dataset: empty manifest");
  return ds;
}

std::vector<const SampleRecord*> Dataset::split(const std::string& name) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

Tensor<float> load_image(const std::string& path) {
  auto img = png::read(path);
  check(img.channels == 3, "load_image: want rgb, got " + std::to_string(img.channels) +
                               " channels in " + path);
  auto t = TensorF::zeros({3, img.h, img.w});
  const int64_t hw = img.h * img.w;
  for (int64_t pix = 0; pix < hw; ++pix)
    for (int c = 0; c < 3; ++c) t.data()[c * hw + pix] = dequantize(img.data[pix * 3 + c]);
  return t;
}

std::vector<uint8_t> load_mask(const std::string& path) {
  auto img = png::read(path);
  check(img.channels == 1, "load_mask: want grayscale");
  std::vector<uint8_t> m(img.data.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = img.data[i] >= 128 ? 1 : 0;
  return m;
}

PairSampler::PairSampler(const Dataset& ds, PairMode mode, const std::string& split,
                         uint64_t seed)
    : mode_(mode), seed_(seed) {
  by_figure_.resize(ds.cfg.figures);
  for (const auto* r : ds.split(split)) by_figure_.at(r->figure_id).push_back(r);
  for (const auto& v : by_figure_)
    check(v.size() >= 2, "PairSampler: each figure needs at least two samples in the split");
}

Pair PairSampler::at(uint64_t index) const {
  // history-free: pair i is a pure function of (seed, i), so a resumed run
  // sees the same stream
  RngStream rng(seed_ ^ (index * 0x2545f4914f6cdd1dull), "pair");
  const uint64_t nf = by_figure_.size();
  const uint64_t f = rng.uniform_index(nf);
  const auto& src_pool = by_figure_[f];
  const SampleRecord* src = src_pool[rng.uniform_index(src_pool.size())];
  if (mode_ == PairMode::kSelf) {
    const SampleRecord* tgt = src;
    while (tgt == src) tgt = src_pool[rng.uniform_index(src_pool.size())];
    return {src, tgt};
  }
  uint64_t g = rng.uniform_index(nf - 1);
  if (g >= f) ++g;
  const auto& tgt_pool = by_figure_[g];
  return {src, tgt_pool[rng.uniform_index(tgt_pool.size())]};
}

Pair PairSampler::next() { return at(cursor_++); }

}  // namespace meshpose::data
