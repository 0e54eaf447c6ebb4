// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "meshpose/metrics.hpp"
#include "meshpose/train.hpp"

using namespace meshpose;
using namespace meshpose::train;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::path("tmp_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

// Direct windowed implementation from the SSIM definition, the independent
// cross-check for the separable production version.
double ssim_reference(const Tensor<float>& a, const Tensor<float>& b) {
  const int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::vector<double> k(11);
  double ks = 0;
  for (int i = 0; i < 11; ++i) {
    double d = i - 5.0;
    k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    ks += k[i];
  }
  for (auto& v : k) v /= ks;
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    double acc = 0;
    int64_t cnt = 0;
    for (int64_t y = 0; y + 11 <= h; ++y)
      for (int64_t x = 0; x + 11 <= w; ++x) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wgt = k[i] * k[j];
            const double va = a.data()[ch * h * w + (y + i) * w + (x + j)];
            const double vb = b.data()[ch * h * w + (y + i) * w + (x + j)];
            mx += wgt * va;
            my += wgt * vb;
            mxx += wgt * va * va;
            myy += wgt * vb * vb;
            mxy += wgt * va * vb;
          }
        const double vx = mxx - mx * mx, vy = myy - my * my, cxy = mxy - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++cnt;
      }
    total += acc / cnt;
  }
  return total / c;
}

data::DatasetConfig tiny_dataset_config() {
  data::DatasetConfig cfg;
  cfg.resolution = 32;
  cfg.figures = 2;
  cfg.backgrounds = 2;
  cfg.train_poses_per_figure = 6;
  cfg.test_poses_per_figure = 2;
  cfg.seed = 3;
  return cfg;
}

TrainConfig tiny_train_config(const std::string& data_dir, const std::string& out_dir) {
  TrainConfig cfg = desk_defaults();
  cfg.data_dir = data_dir;
  cfg.out_dir = out_dir;
  cfg.resolution = 32;
  cfg.batch_size = 2;
  cfg.steps = 4;
  cfg.width_base = 4;
  cfg.adc_width = 4;
  cfg.disc_width = 4;
  cfg.checkpoint_every = 2;
  cfg.seed = 23;
  return cfg;
}

}  // namespace

TEST_CASE("config defaults mirror the published training recipe") {
  TrainConfig cfg;
  CHECK(cfg.epochs == 30);
  CHECK(cfg.hold_epochs == 5);
  CHECK(cfg.lr_g == 2e-3);
  CHECK(cfg.lr_g_final == 2e-6);
  CHECK(cfg.lr_d == 2e-3);
  CHECK(cfg.lambda_rec == 10.0);
  CHECK(cfg.lambda_perc == 10.0);
  CHECK(cfg.lambda_adv == 1.0);
  CHECK(cfg.lambda_mask == 1.0);
  CHECK(cfg.lambda_face == 5.0);

  TrainConfig desk = desk_defaults();
  CHECK(desk.steps == 2000);
  CHECK(desk.resolution == 64);
  CHECK(desk.lr_g == 2e-3);  // schedule values carry over
}

TEST_CASE("config file parsing and canonical hashing") {
  TmpDir dir("config");
  {
    std::ofstream os(dir.path / "a.cfg");
    os << "# comment\n"
          "batch_size = 3\n"
          "lr_g = 1e-3   # inline comment\n"
          "disable_3dp = true\n";
  }
  auto cfg = parse_config_file((dir.path / "a.cfg").string(), TrainConfig{});
  CHECK(cfg.batch_size == 3);
  CHECK(cfg.lr_g == 1e-3);
  CHECK(cfg.disable_3dp);

  {
    std::ofstream os(dir.path / "bad.cfg");
    os << "no_such_key = 1\n";
  }
  CHECK_THROWS_AS(parse_config_file((dir.path / "bad.cfg").string(), TrainConfig{}),
                  std::runtime_error);

  auto h1 = config_hash(cfg);
  auto h2 = config_hash(cfg);
  CHECK(h1 == h2);
  cfg.seed += 1;
  CHECK(config_hash(cfg) != h1);
}

TEST_CASE("lr schedule: hold, endpoints, linearity at interior epochs") {
  TrainConfig cfg;  // 30 epochs, hold 5, 2e-3 -> 2e-6
  const int64_t spe = 100, total = 30 * spe;
  CHECK(lr_schedule(cfg, 1, spe, total) == 2e-3);
  CHECK(lr_schedule(cfg, 5 * spe, spe, total) == 2e-3);
  CHECK(lr_schedule(cfg, total, spe, total) == doctest::Approx(2e-6).epsilon(1e-12));
  for (int64_t epoch : {10, 17, 25}) {
    const double f = double(epoch - 5) / 25.0;
    const double want = 2e-3 + f * (2e-6 - 2e-3);
    CHECK(lr_schedule(cfg, epoch * spe, spe, total) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("ssim: identity, symmetry, reference agreement") {
  RngStream rng(31, "ssim");
  auto a = TensorF::zeros({3, 24, 24});
  for (int64_t i = 0; i < a.numel(); ++i) a.data()[i] = float(rng.uniform(0, 1));
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  auto b = TensorF::zeros({3, 24, 24});
  for (int64_t i = 0; i < b.numel(); ++i) b.data()[i] = float(rng.uniform(0, 1));
  CHECK(metrics::ssim(a, b) == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-12));

  // constant vs constant + 0.5 against the independent reference
  auto ca = TensorF::full({3, 16, 16}, 0.25f);
  auto cb = TensorF::full({3, 16, 16}, 0.75f);
  CHECK(metrics::ssim(ca, cb) == doctest::Approx(ssim_reference(ca, cb)).epsilon(1e-4));
  CHECK(metrics::ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-4));

  CHECK_THROWS_AS(metrics::ssim(a, TensorF::zeros({3, 24, 23})), std::runtime_error);
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
  TmpDir dir("ckpt");
  RngStream rng(33, "ckpt");
  auto p1 = TensorF::zeros({3, 4});
  auto p2 = TensorF::zeros({5});
  for (int64_t i = 0; i < p1.numel(); ++i) p1.data()[i] = float(rng.uniform(-1, 1));
  for (int64_t i = 0; i < p2.numel(); ++i) p2.data()[i] = float(rng.uniform(-1, 1));
  NamedParams<float> g{{"g.w", &p1}};
  NamedParams<float> d{{"d.w", &p2}};
  AdamState<float> ag, ad;
  std::vector<Tensor<float>> grads{TensorF::full({3, 4}, 0.1f)};
  adam_step(ag, g, grads, 0.01f);

  auto ck = pack_checkpoint(123, 7, g, d, ag, ad);
  auto path1 = (dir.path / "a.bin").string();
  auto path2 = (dir.path / "b.bin").string();
  save_checkpoint(ck, path1);
  auto loaded = load_checkpoint(path1);
  CHECK(loaded.step == 7);
  CHECK(loaded.config_hash == 123);
  save_checkpoint(loaded, path2);

  std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());

  // unpack restores parameter bytes
  auto p1_copy = p1.clone();
  for (int64_t i = 0; i < p1.numel(); ++i) p1.data()[i] = 0;
  AdamState<float> ag2, ad2;
  unpack_checkpoint(loaded, g, d, ag2, ad2);
  for (int64_t i = 0; i < p1.numel(); ++i) CHECK(p1.data()[i] == p1_copy.data()[i]);
  CHECK(ag2.step == 1);
}

TEST_CASE("trainer: smoke run, identical reruns, checkpoint resume") {
  TmpDir dir("train_smoke");
  auto dpath = (dir.path / "data").string();
  data::generate_dataset(tiny_dataset_config(), dpath);
  auto ds = data::load_dataset(dpath);

  auto run_once = [&](const std::string& out) {
    auto cfg = tiny_train_config(dpath, (dir.path / out).string());
    Trainer t(cfg, ds);
    t.run();
    std::ifstream log(fs::path(cfg.out_dir) / "loss_log.jsonl");
    return std::string((std::istreambuf_iterator<char>(log)),
                       std::istreambuf_iterator<char>());
  };
  auto log1 = run_once("runA");
  auto log2 = run_once("runB");
  CHECK(!log1.empty());
  CHECK(log1 == log2);

  // resume from the step-2 checkpoint and replay the tail of the log
  auto cfg = tiny_train_config(dpath, (dir.path / "runC").string());
  Trainer t(cfg, ds);
  t.resume((dir.path / "runA" / "ckpt_2.bin").string());
  CHECK(t.current_step() == 2);
  std::vector<std::string> tail;
  while (t.current_step() < t.total_steps()) tail.push_back(stats_to_json(t.train_step()));

  std::istringstream ref(log1);
  std::string line;
  std::vector<std::string> ref_lines;
  while (std::getline(ref, line)) ref_lines.push_back(line);
  REQUIRE(ref_lines.size() == 4);
  CHECK(tail.size() == 2);
  CHECK(tail[0] == ref_lines[2]);
  CHECK(tail[1] == ref_lines[3]);

  // wrong-config resume fails loudly
  auto cfg_bad = cfg;
  cfg_bad.width_base = 8;
  CHECK_THROWS_AS(Trainer(cfg_bad, ds).resume((dir.path / "runA" / "ckpt_2.bin").string()),
                  std::runtime_error);

  // inference and eval run end to end
  Trainer te(cfg, ds);
  te.resume((dir.path / "runA" / "ckpt_final.bin").string());
  auto out = te.infer(ds.records[0], ds.records[1]);
  CHECK(out.shape() == Shape{3, 32, 32});
  auto ev = te.evaluate("test", 3, 99);
  CHECK(ev.pairs == 3);
  CHECK(ev.ssim > -1.0);
  CHECK(ev.ssim <= 1.0);
}
