#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "panoda/config.hpp"
#include "panoda/datapipe.hpp"
#include "panoda/evalkit.hpp"
#include "panoda/optim.hpp"
#include "panoda/segnet.hpp"

namespace panoda::trainer {

struct Batch {
  Tensor images;  // [N,3,H,W]
  std::vector<LabelGrid> labels;  // may be empty (unlabelled target)
  std::vector<std::string> ids;
};

struct StepMetrics {
  int64_t iter = 0;
  double loss_g = 0.0;
  std::optional<double> loss_d;
  double lr_g = 0.0, lr_d = 0.0;
  std::map<std::string, double> terms;  // per-module named losses
  bool skipped = false;                 // ssl batch fully gated out
};

struct PseudoResult {
  LabelGrid label;
  FloatGrid variance;
};

// p1 = softmax(c1), p2 = softmax(c2); pseudo label = argmax of the mean;
// variance = mean over classes of (p1-p2)^2 per pixel.
PseudoResult generate_pseudo_labels(segnet::SegNet& net, const Tensor& image);
std::vector<PseudoResult> generate_pseudo_labels_batch(segnet::SegNet& net, const Tensor& images);

// Keeps pixels whose variance is <= the q-quantile (ascending order
// statistic at floor(q*(n-1))); dropped pixels become ignore.
LabelGrid uncertainty_gate(const LabelGrid& pseudo, const FloatGrid& variance, double q);

// The trainable system: generator, per-module discriminators, optimizers.
class AdaptationEngine {
 public:
  explicit AdaptationEngine(const config::ExperimentConfig& cfg);

  // Stage-1 step: G phase (seg + adversarial + entropy), then one Adam step
  // per discriminator on the detached maps. Pure supervised when tgt is null
  // or no modules are active.
  StepMetrics train_step(const Batch& src, const Batch* tgt);

  // Stage-2 step on pseudo-labelled target batches. src_for_d feeds the
  // discriminator updates when adversarial terms are retained.
  StepMetrics ssl_step(const Batch& tgt, const Batch* src_for_d);

  segnet::SegNet& net() { return *net_; }
  const std::array<double, kNumClasses>& class_weights() const { return class_weights_; }
  void set_class_weights(const std::array<double, kNumClasses>& w) { class_weights_ = w; }

  int64_t iteration() const { return iter_; }
  int64_t ssl_iteration() const { return ssl_iter_; }
  int64_t skipped_batches() const { return skipped_; }
  bool ssl_mode() const { return ssl_mode_; }
  void enter_ssl_stage();  // switches to the stage-2 learning rates

  void save_checkpoint(const std::string& path, const std::string& extra_meta_json = "{}") const;
  void load_checkpoint(const std::string& path);

  std::vector<std::string> discriminator_keys() const;

 private:
  struct DiscriminatorSlot {
    std::unique_ptr<damods::PatchDiscriminator> d;
    std::unique_ptr<optim::Adam> opt;
  };

  // other_batch: the target batch in stage 1, the source batch in the ssl
  // stage (feeding the discriminator side when adversarial terms are kept).
  StepMetrics step_impl(const Batch* other_batch, const Batch& sup_batch, bool ssl,
                        const std::vector<LabelGrid>* ssl_labels);
  ad::Value region_stage_logits(const segnet::SegNetForward& fwd, int out_h, int out_w);

  config::ExperimentConfig cfg_;
  std::unique_ptr<segnet::SegNet> net_;
  nn::ParamStore rc_params_;  // region-stage prediction head
  nn::Conv2d rc_head_;
  std::map<std::string, DiscriminatorSlot> discs_;
  std::unique_ptr<optim::SgdMomentum> g_opt_;
  std::array<double, kNumClasses> class_weights_{};
  int64_t iter_ = 0, ssl_iter_ = 0, skipped_ = 0;
  bool ssl_mode_ = false;
};

struct EvalOutcome {
  evalkit::IouReport report;
  evalkit::DirectionalReport directional;
  int images = 0;
};

// Runs the model over a labelled manifest and accumulates metrics. The
// prediction head follows cfg.eval.head.
EvalOutcome evaluate_manifest(segnet::SegNet& net, const datapipe::DatasetManifest& manifest,
                              const config::EvalConfig& eval_cfg,
                              std::optional<std::pair<int, int>> resize = std::nullopt);

LabelGrid predict(segnet::SegNet& net, const Tensor& image, const std::string& head);

struct RunReport {
  std::string run_dir;
  std::string run_id;
  double final_miou = 0.0;
  double best_val_miou = 0.0;
  std::vector<double> sector_miou;
  nlohmann::json details;
};

// Full experiment: stage 1 (train/adapt), optional SSL runs, periodic eval,
// checkpoints, ndjson metrics log, JSON + text report in out_dir.
RunReport run_experiment(const config::ExperimentConfig& cfg, const std::string& out_dir,
                         bool with_ssl_stage);

}  // namespace panoda::trainer
