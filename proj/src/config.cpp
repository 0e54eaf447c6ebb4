// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "meshpose/rng.hpp"
#include "meshpose/tensor.hpp"

namespace meshpose::train {

TrainConfig desk_defaults() {
  TrainConfig cfg;
  cfg.resolution = 64;
  cfg.batch_size = 2;
  cfg.steps = 2000;
  cfg.width_base = 8;
  cfg.adc_width = 8;
  cfg.disc_width = 16;
  cfg.checkpoint_every = 500;
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& v, const std::string& key) {
  try {
    return std::stoll(v);
  } catch (...) {
    fail("config: bad integer for " + key + ": '" + v + "'");
  }
}

double to_f64(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    fail("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config: bad bool for " + key + ": '" + v + "'");
}

}  // namespace

void apply_config_line(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "data_dir") c.data_dir = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "resolution") c.resolution = to_i64(value, key);
  else if (key == "batch_size") c.batch_size = to_i64(value, key);
  else if (key == "epochs") c.epochs = to_i64(value, key);
  else if (key == "steps") c.steps = to_i64(value, key);
  else if (key == "hold_epochs") c.hold_epochs = to_i64(value, key);
  else if (key == "lr_g") c.lr_g = to_f64(value, key);
  else if (key == "lr_g_final") c.lr_g_final = to_f64(value, key);
  else if (key == "lr_d") c.lr_d = to_f64(value, key);
  else if (key == "lambda_rec") c.lambda_rec = to_f64(value, key);
  else if (key == "lambda_perc") c.lambda_perc = to_f64(value, key);
  else if (key == "lambda_adv") c.lambda_adv = to_f64(value, key);
  else if (key == "lambda_mask") c.lambda_mask = to_f64(value, key);
  else if (key == "lambda_face") c.lambda_face = to_f64(value, key);
  else if (key == "width_base") c.width_base = to_i64(value, key);
  else if (key == "adc_width") c.adc_width = to_i64(value, key);
  else if (key == "disc_width") c.disc_width = to_i64(value, key);
  else if (key == "disable_3dp") c.disable_3dp = to_bool(value, key);
  else if (key == "disable_adcnet") c.disable_adcnet = to_bool(value, key);
  else if (key == "seed") c.seed = static_cast<uint64_t>(to_i64(value, key));
  else if (key == "checkpoint_every") c.checkpoint_every = to_i64(value, key);
  else if (key == "threads") c.threads = static_cast<int>(to_i64(value, key));
  else fail("config: unknown key '" + key + "'");
}

TrainConfig parse_config_file(const std::string& path, const TrainConfig& base) {
  std::ifstream is(path);
  check(is.good(), "config: cannot open " + path);
  TrainConfig cfg = base;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    check(eq != std::string::npos,
          "config: line " + std::to_string(lineno) + " is not 'key = value'");
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string canonical_config(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  // paths and thread counts are host details, not part of the run identity
  kv["resolution"] = std::to_string(c.resolution);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["epochs"] = std::to_string(c.epochs);
  kv["steps"] = std::to_string(c.steps);
  kv["hold_epochs"] = std::to_string(c.hold_epochs);
  kv["lr_g"] = num(c.lr_g);
  kv["lr_g_final"] = num(c.lr_g_final);
  kv["lr_d"] = num(c.lr_d);
  kv["lambda_rec"] = num(c.lambda_rec);
  kv["lambda_perc"] = num(c.lambda_perc);
  kv["lambda_adv"] = num(c.lambda_adv);
  kv["lambda_mask"] = num(c.lambda_mask);
  kv["lambda_face"] = num(c.lambda_face);
  kv["width_base"] = std::to_string(c.width_base);
  kv["adc_width"] = std::to_string(c.adc_width);
  kv["disc_width"] = std::to_string(c.disc_width);
  kv["disable_3dp"] = c.disable_3dp ? "true" : "false";
  kv["disable_adcnet"] = c.disable_adcnet ? "true" : "false";
  kv["seed"] = std::to_string(c.seed);
  kv["checkpoint_every"] = std::to_string(c.checkpoint_every);
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

uint64_t config_hash(const TrainConfig& c) { return fnv1a(canonical_config(c)); }

double lr_schedule(const TrainConfig& cfg, int64_t step, int64_t steps_per_epoch,
                   int64_t total_steps) {
  check(steps_per_epoch > 0 && total_steps > 0, "lr_schedule: bad step counts");
  const int64_t hold = cfg.hold_epochs * steps_per_epoch;
  if (step <= hold || total_steps <= hold) return cfg.lr_g;
  const double f = double(step - hold) / double(total_steps - hold);
  return cfg.lr_g + (cfg.lr_g_final - cfg.lr_g) * std::min(1.0, f);
}

}  // namespace meshpose::train
