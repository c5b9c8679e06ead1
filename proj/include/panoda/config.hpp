#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "panoda/losses.hpp"
#include "panoda/segnet.hpp"
#include "panoda/synthetic.hpp"

namespace panoda::config {

struct DataConfig {
  std::string layout = "synthetic";
  std::string source_root, target_root;
  std::string source_split = "train", target_split = "train";
  std::string val_split = "val", test_split = "test";
  std::optional<std::pair<int, int>> source_resize;  // [h, w] or null
  std::string class_weights = "auto";                // auto | uniform
};

struct ModelConfig {
  std::string mode = "danet_like";
  std::array<int, 4> channels{16, 32, 48, 64};
  int head_hidden = 32;
  int gn_groups = 8;
};

struct ModulesConfig {
  std::vector<std::string> active;  // subset of {"S","A","R","F"}
  std::vector<std::string> sdam_placement{"output"};  // feature|output (set)
  std::string rcdam_placement = "output";
  int d_base = 64;

  bool has(const std::string& m) const;
};

struct OptimConfig {
  double g_lr = 1e-5, g_momentum = 0.9, g_weight_decay = 5e-4;
  double d_lr = 4e-6, d_beta1 = 0.9, d_beta2 = 0.99;
  double ssl_g_lr = 1e-8, ssl_d_lr = 4e-9;
};

struct ScheduleConfig {
  int64_t max_iter = 200000;  // poly horizon
  int64_t iters = 200000;     // steps actually run
  int batch = 2;
  double poly_power = 0.9;
  int64_t eval_every = 500;
  int64_t log_every = 10;
};

struct SslConfig {
  int64_t iters = 500;
  int runs = 1;
  double gate_quantile = 0.7;
  bool retain_adversarial = true;
};

struct EvalConfig {
  std::string head = "mean";  // c1 | c2 | mean
  int sectors = 8;
};

struct BenchConfig {
  int n = 100, warmup = 10;
  int height = 64, width = 256;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  DataConfig data;
  ModelConfig model;
  ModulesConfig modules;
  damods::LossWeights lambdas;
  OptimConfig optim;
  ScheduleConfig schedule;
  SslConfig ssl;
  EvalConfig eval;
  BenchConfig bench;
  synthetic::SyntheticSceneSpec synth;
  synthetic::SynthCounts synth_counts;

  nlohmann::json resolved;  // the merged json this config was parsed from
};

// Default-populated json document matching ExperimentConfig.
nlohmann::json default_config_json();

// Merge file onto defaults (unknown keys are errors), apply dotted-key
// overrides (type-checked, last wins), then parse. Collects every problem and
// throws one exception listing all of them.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_json(nlohmann::json merged);

// "a.b.c=value" applied onto the document; value parsed as the existing type.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// 16-hex-digit digest of the resolved config + seed; names the run directory.
std::string run_id(const nlohmann::json& resolved);

}  // namespace panoda::config
