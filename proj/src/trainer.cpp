#include "panoda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "panoda/checkpoint.hpp"
#include "panoda/losses.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace panoda::trainer {

// ---------------------------------------------------------------------------
// pseudo labels and gating
// ---------------------------------------------------------------------------

std::vector<PseudoResult> generate_pseudo_labels_batch(segnet::SegNet& net, const Tensor& images) {
  ad::NoGradGuard ng;
  auto fwd = net.forward(images);
  const Tensor& c1 = fwd.heads.c1->val;
  const Tensor& c2 = fwd.heads.c2->val;
  Tensor p1, p2;
  ops::softmax_channels(c1, p1);
  ops::softmax_channels(c2, p2);
  const int n = c1.dim(0), k = c1.dim(1), h = c1.dim(2), w = c1.dim(3);
  const int64_t hw = int64_t(h) * w;
  std::vector<PseudoResult> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    PseudoResult& r = out[static_cast<size_t>(i)];
    r.label = LabelGrid(h, w);
    r.variance = FloatGrid(h, w);
    for (int64_t p = 0; p < hw; ++p) {
      const double* a = p1.data() + int64_t(i) * k * hw + p;
      const double* b = p2.data() + int64_t(i) * k * hw + p;
      int best = 0;
      double bv = -1.0, var = 0.0;
      for (int c = 0; c < k; ++c) {
        const double mean = 0.5 * (a[c * hw] + b[c * hw]);
        const double diff = a[c * hw] - b[c * hw];
        var += diff * diff;
        if (mean > bv) {
          bv = mean;
          best = c;
        }
      }
      r.label.v[static_cast<size_t>(p)] = best;
      r.variance.v[static_cast<size_t>(p)] = var / k;
    }
  }
  return out;
}

PseudoResult generate_pseudo_labels(segnet::SegNet& net, const Tensor& image) {
  Tensor batched = Tensor::from({1, image.dim(0), image.dim(1), image.dim(2)},
                                std::vector<double>(image.data(), image.data() + image.size()));
  return std::move(generate_pseudo_labels_batch(net, batched)[0]);
}

LabelGrid uncertainty_gate(const LabelGrid& pseudo, const FloatGrid& variance, double q) {
  if (!pseudo.same_shape_as(LabelGrid(variance.h, variance.w)))
    throw std::invalid_argument("uncertainty_gate: shape mismatch");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("uncertainty_gate: q must be in [0,1]");
  std::vector<double> sorted(variance.v);
  const size_t rank = static_cast<size_t>(std::floor(q * (sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
  const double tau = sorted[rank];
  LabelGrid out = pseudo;
  for (size_t i = 0; i < out.v.size(); ++i)
    if (variance.v[i] > tau) out.v[i] = kIgnoreLabel;
  return out;
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

AdaptationEngine::AdaptationEngine(const config::ExperimentConfig& cfg) : cfg_(cfg) {
  Rng net_rng(Rng::mix(cfg.seed, 11));
  segnet::SegNetConfig scfg;
  scfg.mode = segnet::mode_from_string(cfg.model.mode);
  scfg.channels = cfg.model.channels;
  scfg.head_hidden = cfg.model.head_hidden;
  scfg.gn_groups = cfg.model.gn_groups;
  net_ = std::make_unique<segnet::SegNet>(scfg, net_rng);

  Rng rc_rng(Rng::mix(cfg.seed, 12));
  rc_head_ = nn::Conv2d(rc_params_, "rc_head", rc_rng, cfg.model.channels[3], kNumClasses, 1, 1, 0);

  // one discriminator per (module, placement)
  std::vector<std::pair<std::string, int>> wanted;
  const int feat_c = cfg.model.channels[3];
  if (cfg.modules.has("S"))
    for (const auto& p : cfg.modules.sdam_placement)
      wanted.emplace_back("S." + p, p == "output" ? kNumClasses : feat_c);
  if (cfg.modules.has("A")) wanted.emplace_back("A", feat_c);
  if (cfg.modules.has("R")) {
    wanted.emplace_back("R1",
                        cfg.modules.rcdam_placement == "output" ? kNumClasses : feat_c);
    wanted.emplace_back("R2", kNumClasses);
  }
  uint64_t idx = 0;
  for (const auto& [key, channels] : wanted) {
    Rng d_rng(Rng::mix(cfg.seed, 13, idx++));
    DiscriminatorSlot slot;
    slot.d = std::make_unique<damods::PatchDiscriminator>(d_rng, channels, cfg.modules.d_base,
                                                          "d");
    slot.opt = std::make_unique<optim::Adam>(slot.d->params().all(), cfg.optim.d_beta1,
                                             cfg.optim.d_beta2);
    discs_.emplace(key, std::move(slot));
  }

  std::vector<ad::Value> g_params = net_->params().all();
  for (const auto& p : rc_params_.all()) g_params.push_back(p);
  g_opt_ = std::make_unique<optim::SgdMomentum>(std::move(g_params), cfg.optim.g_momentum,
                                                cfg.optim.g_weight_decay);
  class_weights_.fill(1.0);
}

std::vector<std::string> AdaptationEngine::discriminator_keys() const {
  std::vector<std::string> keys;
  for (const auto& [k, _] : discs_) keys.push_back(k);
  return keys;
}

void AdaptationEngine::enter_ssl_stage() {
  ssl_mode_ = true;
  ssl_iter_ = 0;
}

ad::Value AdaptationEngine::region_stage_logits(const segnet::SegNetForward& fwd, int out_h,
                                                int out_w) {
  const int n = fwd.region_feat->val.dim(0);
  const int h = fwd.region_h, w = fwd.region_w;
  std::vector<ad::Value> items;
  items.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor b1({1, 1, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) b1.at4(0, 0, y, x) = fwd.b1_region.at4(i, 0, y, x);
    const int kc = fwd.c1_region.dim(1);
    Tensor c1({1, kc, h, w});
    for (int c = 0; c < kc; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) c1.at4(0, c, y, x) = fwd.c1_region.at4(i, c, y, x);
    auto feat_slice = ops::slice_n(fwd.region_feat, i);
    auto rdm = attention::region_construction(b1, c1, feat_slice->val);
    items.push_back(attention::region_interaction(feat_slice, rdm));
  }
  auto rc_feat = items.size() == 1 ? items[0] : ops::stack_n(items);
  return ops::upsample_bilinear(rc_head_.forward(rc_feat), out_h, out_w);
}

namespace {

double boundary_pos_weight(const std::vector<LabelGrid>& targets) {
  int64_t pos = 0, neg = 0;
  for (const auto& g : targets)
    for (int32_t v : g.v) {
      if (v == 1) ++pos;
      else if (v == 0) ++neg;
    }
  if (pos == 0) return 1.0;
  return std::clamp(static_cast<double>(neg) / static_cast<double>(pos), 1.0, 20.0);
}

bool any_live_pixel(const std::vector<LabelGrid>& labels) {
  for (const auto& g : labels)
    for (int32_t v : g.v)
      if (v != kIgnoreLabel) return true;
  return false;
}

}  // namespace

StepMetrics AdaptationEngine::step_impl(const Batch* adv_src_batch, const Batch& sup_batch,
                                        bool ssl, const std::vector<LabelGrid>* ssl_labels) {
  StepMetrics metrics;
  metrics.iter = ssl ? ssl_iter_ : iter_;

  const std::vector<LabelGrid>& sup_labels = ssl ? *ssl_labels : sup_batch.labels;
  if (sup_labels.empty() || !any_live_pixel(sup_labels))
    throw std::invalid_argument("train step requires at least one supervised pixel");

  // forwards: in stage 1 sup==source and adv source==sup forward; in ssl
  // sup==target and the adversarial source comes from its own batch
  auto sup_fwd = net_->forward(sup_batch.images);
  std::optional<segnet::SegNetForward> src_fwd_storage;
  const segnet::SegNetForward* adv_src_fwd = nullptr;
  const segnet::SegNetForward* adv_tgt_fwd = nullptr;
  std::optional<segnet::SegNetForward> tgt_fwd_storage;

  const bool adversarial_active = !discs_.empty() && (!ssl || cfg_.ssl.retain_adversarial);
  if (!ssl) {
    if (adv_src_batch) {
      // stage 1: sup_batch is the source, adv target batch comes in adv_src_batch
      tgt_fwd_storage.emplace(net_->forward(adv_src_batch->images));
      adv_src_fwd = &sup_fwd;
      adv_tgt_fwd = &*tgt_fwd_storage;
    }
  } else if (adversarial_active && adv_src_batch) {
    src_fwd_storage.emplace(net_->forward(adv_src_batch->images));
    adv_src_fwd = &*src_fwd_storage;
    adv_tgt_fwd = &sup_fwd;
  }

  const bool r_active = cfg_.modules.has("R");
  const int out_h = sup_fwd.heads.c1->val.dim(2), out_w = sup_fwd.heads.c1->val.dim(3);

  std::vector<damods::LossTerm> terms;

  // supervised terms
  terms.push_back({r_active ? "R1.seg" : "S.seg",
                   r_active ? cfg_.lambdas.rcdam1.seg : cfg_.lambdas.sdam.seg,
                   ops::weighted_cross_entropy(sup_fwd.heads.c1, sup_labels, class_weights_)});
  terms.push_back({"A.seg", cfg_.lambdas.adam.seg,
                   ops::weighted_cross_entropy(sup_fwd.heads.c2, sup_labels, class_weights_)});
  if (cfg_.lambdas.boundary > 0.0) {
    std::vector<LabelGrid> bnd;
    bnd.reserve(sup_labels.size());
    for (const auto& g : sup_labels) bnd.push_back(damods::boundary_targets(g));
    if (any_live_pixel(bnd))
      terms.push_back({"B.seg", cfg_.lambdas.boundary,
                       ops::bce_logits_map(sup_fwd.heads.b1, bnd, boundary_pos_weight(bnd))});
  }

  ad::Value rc_sup, rc_adv_src, rc_adv_tgt;
  if (r_active) {
    rc_sup = region_stage_logits(sup_fwd, out_h, out_w);
    terms.push_back({"R2.seg", cfg_.lambdas.rcdam2.seg,
                     ops::weighted_cross_entropy(rc_sup, sup_labels, class_weights_)});
  }

  // adversarial terms per discriminator
  if (adversarial_active && adv_src_fwd && adv_tgt_fwd) {
    if (r_active) {
      rc_adv_src = (adv_src_fwd == &sup_fwd && rc_sup)
                       ? rc_sup
                       : region_stage_logits(*adv_src_fwd, out_h, out_w);
      rc_adv_tgt = (adv_tgt_fwd == &sup_fwd && rc_sup)
                       ? rc_sup
                       : region_stage_logits(*adv_tgt_fwd, out_h, out_w);
    }
    for (auto& [key, slot] : discs_) {
      ad::Value src_map, tgt_map;
      const damods::ModuleLambdas* lam = nullptr;
      if (key == "S.output") {
        src_map = adv_src_fwd->heads.c1;
        tgt_map = adv_tgt_fwd->heads.c1;
        lam = &cfg_.lambdas.sdam;
      } else if (key == "S.feature") {
        src_map = adv_src_fwd->f16;
        tgt_map = adv_tgt_fwd->f16;
        lam = &cfg_.lambdas.sdam;
      } else if (key == "A") {
        src_map = adv_src_fwd->dual_feat;
        tgt_map = adv_tgt_fwd->dual_feat;
        lam = &cfg_.lambdas.adam;
      } else if (key == "R1") {
        if (cfg_.modules.rcdam_placement == "output") {
          src_map = adv_src_fwd->heads.c1;
          tgt_map = adv_tgt_fwd->heads.c1;
        } else {
          src_map = adv_src_fwd->f16;
          tgt_map = adv_tgt_fwd->f16;
        }
        lam = &cfg_.lambdas.rcdam1;
      } else if (key == "R2") {
        src_map = rc_adv_src;
        tgt_map = rc_adv_tgt;
        lam = &cfg_.lambdas.rcdam2;
      } else {
        throw std::logic_error("unknown discriminator key " + key);
      }
      auto losses = damods::adversarial_losses(src_map, tgt_map, nullptr, *slot.d, class_weights_);
      terms.push_back({key + ".adv", lam->adv, losses.adv});
      terms.push_back({key + ".d", lam->d, losses.d});
    }
    if (cfg_.modules.has("F"))
      terms.push_back({"F.ent", 1.0,
                       damods::fcdam_entropy_loss(adv_src_fwd->f16, adv_tgt_fwd->f16,
                                                  cfg_.lambdas.ent_s, cfg_.lambdas.ent_t)});
  }

  auto total = damods::combine_total_loss(terms);
  metrics.loss_g = total.g->val[0];
  if (total.d) metrics.loss_d = total.d->val[0];
  for (const auto& t : terms) metrics.terms[t.name] = t.value->val[0];

  if (!std::isfinite(metrics.loss_g) || (metrics.loss_d && !std::isfinite(*metrics.loss_d))) {
    json dump;
    for (const auto& t : terms) dump[t.name] = t.value->val[0];
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(metrics.iter) +
                             "; per-module losses: " + dump.dump());
  }

  // phase A: generator update with frozen discriminators (the adversarial
  // subgraphs were built under the freeze, so no D gradient exists there)
  const int64_t horizon = ssl ? std::max<int64_t>(cfg_.ssl.iters, 1) : cfg_.schedule.max_iter;
  const int64_t stage_iter = ssl ? ssl_iter_ : iter_;
  metrics.lr_g = optim::poly_lr(ssl ? cfg_.optim.ssl_g_lr : cfg_.optim.g_lr, stage_iter, horizon,
                                cfg_.schedule.poly_power);
  g_opt_->zero_grad();
  ad::backward(total.g);
  g_opt_->step(metrics.lr_g);

  // phase B: discriminator updates on the detached maps
  if (total.d) {
    metrics.lr_d = optim::poly_lr(ssl ? cfg_.optim.ssl_d_lr : cfg_.optim.d_lr, stage_iter, horizon,
                                  cfg_.schedule.poly_power);
    for (auto& [_, slot] : discs_) slot.opt->zero_grad();
    ad::backward(total.d);
    for (auto& [_, slot] : discs_) slot.opt->step(metrics.lr_d);
  }

  if (ssl)
    ++ssl_iter_;
  else
    ++iter_;
  return metrics;
}

StepMetrics AdaptationEngine::train_step(const Batch& src, const Batch& tgt) {
  return step_impl(&tgt, src, /*ssl=*/false, nullptr);
}

StepMetrics AdaptationEngine::ssl_step(const Batch& tgt, const Batch* src_for_d) {
  auto pseudo = generate_pseudo_labels_batch(*net_, tgt.images);
  std::vector<LabelGrid> gated;
  gated.reserve(pseudo.size());
  for (const auto& p : pseudo)
    gated.push_back(uncertainty_gate(p.label, p.variance, cfg_.ssl.gate_quantile));
  if (!any_live_pixel(gated)) {
    ++skipped_;
    StepMetrics m;
    m.iter = ssl_iter_;
    m.skipped = true;
    return m;
  }
  return step_impl(src_for_d, tgt, /*ssl=*/true, &gated);
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

void AdaptationEngine::save_checkpoint(const std::string& path,
                                       const std::string& extra_meta_json) const {
  std::vector<checkpoint::NamedTensor> tensors;
  for (const auto& p : net_->params().all()) tensors.push_back({"G/" + p->name, p->val});
  for (const auto& p : rc_params_.all()) tensors.push_back({"RC/" + p->name, p->val});
  {
    const auto& params = g_opt_->params();
    auto& vel = const_cast<AdaptationEngine*>(this)->g_opt_->velocity();
    for (size_t i = 0; i < params.size(); ++i)
      tensors.push_back({"OPT/G/vel/" + params[i]->name, vel[i]});
  }
  json adam_t;
  for (const auto& [key, slot] : discs_) {
    for (const auto& p : slot.d->params().all())
      tensors.push_back({"D/" + key + "/" + p->name, p->val});
    auto& m1 = const_cast<optim::Adam&>(*slot.opt).moment1();
    auto& m2 = const_cast<optim::Adam&>(*slot.opt).moment2();
    const auto& dp = slot.opt->params();
    for (size_t i = 0; i < dp.size(); ++i) {
      tensors.push_back({"OPT/D/" + key + "/m/" + dp[i]->name, m1[i]});
      tensors.push_back({"OPT/D/" + key + "/v/" + dp[i]->name, m2[i]});
    }
    adam_t[key] = const_cast<optim::Adam&>(*slot.opt).step_count();
  }
  Tensor cw({kNumClasses});
  for (int i = 0; i < kNumClasses; ++i) cw[i] = class_weights_[static_cast<size_t>(i)];
  tensors.push_back({"CLASS_WEIGHTS", cw});

  json meta;
  meta["mode"] = cfg_.model.mode;
  meta["channels"] = cfg_.model.channels;
  meta["head_hidden"] = cfg_.model.head_hidden;
  meta["gn_groups"] = cfg_.model.gn_groups;
  meta["d_base"] = cfg_.modules.d_base;
  meta["classmap_hash"] = datapipe::ClassMap::cityscapes19().hash();
  meta["iter"] = iter_;
  meta["ssl_iter"] = ssl_iter_;
  meta["skipped"] = skipped_;
  meta["ssl_mode"] = ssl_mode_;
  meta["adam_t"] = adam_t;
  meta["extra"] = json::parse(extra_meta_json);
  checkpoint::save_archive(path, meta.dump(), tensors);
}

void AdaptationEngine::load_checkpoint(const std::string& path) {
  auto a = checkpoint::load_archive(path);
  const json meta = json::parse(a.meta_json);
  if (meta.at("mode").get<std::string>() != cfg_.model.mode)
    throw std::runtime_error("checkpoint mode mismatch: " + path);
  if (meta.at("channels").get<std::array<int, 4>>() != cfg_.model.channels)
    throw std::runtime_error("checkpoint channel configuration mismatch: " + path);
  if (meta.at("classmap_hash").get<uint64_t>() != datapipe::ClassMap::cityscapes19().hash())
    throw std::runtime_error("checkpoint class map mismatch: " + path);

  auto copy_into = [&a](const std::string& name, Tensor& dst) {
    const Tensor& src = a.find(name);
    if (!src.same_shape(dst))
      throw std::runtime_error("checkpoint tensor shape mismatch for " + name);
    dst = src;
  };
  for (const auto& p : net_->params().all()) copy_into("G/" + p->name, p->val);
  for (const auto& p : rc_params_.all()) copy_into("RC/" + p->name, p->val);
  {
    const auto& params = g_opt_->params();
    auto& vel = g_opt_->velocity();
    for (size_t i = 0; i < params.size(); ++i)
      copy_into("OPT/G/vel/" + params[i]->name, vel[i]);
  }
  for (auto& [key, slot] : discs_) {
    for (const auto& p : slot.d->params().all()) copy_into("D/" + key + "/" + p->name, p->val);
    const auto& dp = slot.opt->params();
    for (size_t i = 0; i < dp.size(); ++i) {
      copy_into("OPT/D/" + key + "/m/" + dp[i]->name, slot.opt->moment1()[i]);
      copy_into("OPT/D/" + key + "/v/" + dp[i]->name, slot.opt->moment2()[i]);
    }
    slot.opt->step_count() = meta.at("adam_t").at(key).get<int64_t>();
  }
  {
    const Tensor& cw = a.find("CLASS_WEIGHTS");
    for (int i = 0; i < kNumClasses; ++i) class_weights_[static_cast<size_t>(i)] = cw[i];
  }
  iter_ = meta.at("iter").get<int64_t>();
  ssl_iter_ = meta.at("ssl_iter").get<int64_t>();
  skipped_ = meta.at("skipped").get<int64_t>();
  ssl_mode_ = meta.at("ssl_mode").get<bool>();
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

LabelGrid predict(segnet::SegNet& net, const Tensor& image, const std::string& head) {
  ad::NoGradGuard ng;
  Tensor batched = Tensor::from({1, image.dim(0), image.dim(1), image.dim(2)},
                                std::vector<double>(image.data(), image.data() + image.size()));
  auto fwd = net.forward(batched);
  const Tensor& c1 = fwd.heads.c1->val;
  const Tensor& c2 = fwd.heads.c2->val;
  if (head == "c1") return ops::argmax_channels(c1, 0);
  if (head == "c2") return ops::argmax_channels(c2, 0);
  Tensor p1, p2;
  ops::softmax_channels(c1, p1);
  ops::softmax_channels(c2, p2);
  for (int64_t i = 0; i < p1.size(); ++i) p1[i] = 0.5 * (p1[i] + p2[i]);
  return ops::argmax_channels(p1, 0);
}

EvalOutcome evaluate_manifest(segnet::SegNet& net, const datapipe::DatasetManifest& manifest,
                              const config::EvalConfig& eval_cfg,
                              std::optional<std::pair<int, int>> resize) {
  EvalOutcome out;
  std::vector<LabelGrid> preds, gts;
  for (const auto& entry : manifest.entries) {
    if (!entry.label_path) continue;
    auto sample = datapipe::load_sample(entry, datapipe::Domain::target, resize);
    preds.push_back(predict(net, sample.image, eval_cfg.head));
    gts.push_back(*sample.label);
    ++out.images;
  }
  if (preds.empty()) throw std::runtime_error("evaluate_manifest: no labelled entries");
  out.directional = evalkit::directional_report(preds, gts, eval_cfg.sectors);
  out.report = evalkit::iou_report(out.directional.global);
  return out;
}

// ---------------------------------------------------------------------------
// experiment driver
// ---------------------------------------------------------------------------

namespace {

// Deterministic epoch-shuffled sampler; all state derives from (seed, iter).
class Sampler {
 public:
  Sampler(const datapipe::DatasetManifest& manifest, uint64_t seed, uint64_t domain_tag,
          datapipe::Domain domain, std::optional<std::pair<int, int>> resize, bool augment)
      : manifest_(manifest),
        seed_(seed),
        tag_(domain_tag),
        domain_(domain),
        resize_(resize),
        augment_(augment) {}

  Batch batch(int64_t iter, int batch_size) {
    Batch b;
    const int64_t n = static_cast<int64_t>(manifest_.entries.size());
    for (int k = 0; k < batch_size; ++k) {
      const int64_t g = iter * batch_size + k;
      const int64_t epoch = g / n;
      if (epoch != perm_epoch_) {
        perm_ = make_perm(epoch);
        perm_epoch_ = epoch;
      }
      const int64_t pos = g % n;
      const auto& entry = manifest_.entries[static_cast<size_t>(perm_[static_cast<size_t>(pos)])];
      auto sample = datapipe::load_sample(entry, domain_, resize_);
      if (augment_) {
        Rng arng(Rng::mix(seed_, tag_ * 1000 + 7, static_cast<uint64_t>(g)));
        sample = datapipe::augment(sample, arng);
      }
      if (k == 0) {
        b.images = Tensor({batch_size, 3, sample.image.dim(1), sample.image.dim(2)});
      }
      std::copy_n(sample.image.data(), sample.image.size(),
                  b.images.data() + int64_t(k) * sample.image.size());
      if (sample.label) b.labels.push_back(*sample.label);
      b.ids.push_back(sample.id);
    }
    return b;
  }

 private:
  std::vector<int64_t> make_perm(int64_t epoch) {
    const int64_t n = static_cast<int64_t>(manifest_.entries.size());
    std::vector<int64_t> p(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    Rng rng(Rng::mix(seed_, tag_, static_cast<uint64_t>(epoch)));
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(rng.uniform_int(0, i))]);
    return p;
  }

  const datapipe::DatasetManifest& manifest_;
  uint64_t seed_, tag_;
  datapipe::Domain domain_;
  std::optional<std::pair<int, int>> resize_;
  bool augment_;
  std::vector<int64_t> perm_;
  int64_t perm_epoch_ = -1;
};

json report_to_json(const EvalOutcome& e) {
  json j;
  j["miou"] = e.report.miou;
  j["pixel_acc"] = e.report.pixel_acc;
  j["images"] = e.images;
  json per_class = json::array();
  for (int c = 0; c < kNumClasses; ++c)
    per_class.push_back(e.report.present[static_cast<size_t>(c)]
                            ? json(e.report.iou[static_cast<size_t>(c)])
                            : json(nullptr));
  j["per_class_iou"] = per_class;
  json sectors = json::array();
  for (const auto& s : e.directional.sector_report) sectors.push_back(s.miou);
  j["sector_miou"] = sectors;
  return j;
}

}  // namespace

RunReport run_experiment(const config::ExperimentConfig& cfg, const std::string& out_dir,
                         bool with_ssl_stage) {
  fs::create_directories(out_dir);
  RunReport report;
  report.run_dir = out_dir;
  report.run_id = config::run_id(cfg.resolved);
  {
    std::ofstream snap(fs::path(out_dir) / "config.json");
    snap << cfg.resolved.dump(2) << "\n";
    std::ofstream idf(fs::path(out_dir) / "run_id.txt");
    idf << report.run_id << "\n";
  }

  const auto layout = datapipe::layout_from_string(cfg.data.layout);
  auto src_manifest = datapipe::load_manifest(cfg.data.source_root, cfg.data.source_split, layout);
  auto val_manifest = datapipe::load_manifest(cfg.data.target_root, cfg.data.val_split, layout);
  auto test_manifest = datapipe::load_manifest(cfg.data.target_root, cfg.data.test_split, layout);
  std::optional<datapipe::DatasetManifest> tgt_manifest;
  const bool needs_target = !cfg.modules.active.empty() || with_ssl_stage;
  if (needs_target)
    tgt_manifest = datapipe::load_manifest(cfg.data.target_root, cfg.data.target_split, layout);

  AdaptationEngine engine(cfg);
  if (cfg.data.class_weights == "auto")
    engine.set_class_weights(datapipe::compute_class_weights(src_manifest));

  std::ofstream metrics(fs::path(out_dir) / "metrics.ndjson");
  {
    json header;
    header["type"] = "header";
    header["run_id"] = report.run_id;
    header["seed"] = cfg.seed;
    header["modules"] = cfg.modules.active;
    header["lambdas"] = cfg.resolved.at("lambdas");
    json cw = json::array();
    for (double w : engine.class_weights()) cw.push_back(w);
    header["class_weights"] = cw;
    metrics << header.dump() << "\n";
  }

  Sampler src_sampler(src_manifest, cfg.seed, 21, datapipe::Domain::source,
                      cfg.data.source_resize, true);
  std::optional<Sampler> tgt_sampler;
  if (tgt_manifest)
    tgt_sampler.emplace(*tgt_manifest, cfg.seed, 22, datapipe::Domain::target, std::nullopt, true);

  const auto run_eval = [&](const datapipe::DatasetManifest& m, const char* split,
                            int64_t at_iter) {
    auto outcome = evaluate_manifest(engine.net(), m, cfg.eval);
    json rec = report_to_json(outcome);
    rec["type"] = "eval";
    rec["split"] = split;
    rec["iter"] = at_iter;
    metrics << rec.dump() << "\n";
    return outcome;
  };

  double best_val = -1.0;
  const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
  const std::string latest_path = (fs::path(out_dir) / "latest.ckpt").string();

  // ---- stage 1 ----
  for (int64_t it = 0; it < cfg.schedule.iters; ++it) {
    Batch src = src_sampler.batch(it, cfg.schedule.batch);
    StepMetrics sm;
    if (tgt_sampler) {
      Batch tgt = tgt_sampler->batch(it, cfg.schedule.batch);
      sm = engine.train_step(src, tgt);
    } else {
      // pure supervised: no adversarial pair
      Batch empty;
      sm = engine.train_step(src, src);  // target side unused without modules
    }
    if (it % cfg.schedule.log_every == 0 || it + 1 == cfg.schedule.iters) {
      json rec;
      rec["type"] = "step";
      rec["iter"] = sm.iter;
      rec["loss_g"] = sm.loss_g;
      if (sm.loss_d) rec["loss_d"] = *sm.loss_d;
      rec["lr_g"] = sm.lr_g;
      rec["lr_d"] = sm.lr_d;
      rec["terms"] = sm.terms;
      metrics << rec.dump() << "\n";
    }
    const bool eval_now = (cfg.schedule.eval_every > 0 && (it + 1) % cfg.schedule.eval_every == 0) ||
                          it + 1 == cfg.schedule.iters;
    if (eval_now) {
      auto val = run_eval(val_manifest, "val", it + 1);
      if (val.report.miou > best_val) {
        best_val = val.report.miou;
        engine.save_checkpoint(best_path);
      }
      engine.save_checkpoint(latest_path);
    }
  }
  if (cfg.schedule.iters == 0) {
    auto val = run_eval(val_manifest, "val", 0);
    best_val = val.report.miou;
    engine.save_checkpoint(best_path);
    engine.save_checkpoint(latest_path);
  }
  report.best_val_miou = best_val;

  // ---- stage 2: uncertainty-gated self-training ----
  if (with_ssl_stage && cfg.ssl.iters > 0 && tgt_sampler) {
    engine.load_checkpoint(best_path);
    engine.enter_ssl_stage();
    for (int run = 0; run < cfg.ssl.runs; ++run) {
      for (int64_t it = 0; it < cfg.ssl.iters; ++it) {
        const int64_t g = run * cfg.ssl.iters + it;
        Batch tgt = tgt_sampler->batch(1000000 + g, cfg.schedule.batch);
        std::optional<Batch> src;
        if (cfg.ssl.retain_adversarial && !cfg.modules.active.empty())
          src = src_sampler.batch(1000000 + g, cfg.schedule.batch);
        auto sm = engine.ssl_step(tgt, src ? &*src : nullptr);
        if (it % cfg.schedule.log_every == 0 || it + 1 == cfg.ssl.iters) {
          json rec;
          rec["type"] = "ssl_step";
          rec["run"] = run;
          rec["iter"] = sm.iter;
          rec["skipped"] = sm.skipped;
          if (!sm.skipped) {
            rec["loss_g"] = sm.loss_g;
            rec["lr_g"] = sm.lr_g;
            rec["terms"] = sm.terms;
          }
          metrics << rec.dump() << "\n";
        }
      }
      auto val = run_eval(val_manifest, "val", cfg.schedule.iters + (run + 1) * cfg.ssl.iters);
      engine.save_checkpoint(latest_path);
      if (val.report.miou > best_val) {
        best_val = val.report.miou;
        engine.save_checkpoint(best_path);
      }
    }
  }

  // ---- final test evaluation and report ----
  auto test = run_eval(test_manifest, "test", -1);
  report.final_miou = test.report.miou;
  for (const auto& s : test.directional.sector_report) report.sector_miou.push_back(s.miou);

  json rj;
  rj["run_id"] = report.run_id;
  rj["best_val_miou"] = best_val;
  rj["test"] = report_to_json(test);
  rj["skipped_ssl_batches"] = engine.skipped_batches();
  report.details = rj;
  {
    std::ofstream rf(fs::path(out_dir) / "report.json");
    rf << rj.dump(2) << "\n";
    std::ofstream tf(fs::path(out_dir) / "report.txt");
    tf << evalkit::render_table({{"this run", test.report}}, datapipe::ClassMap::cityscapes19());
  }
  return report;
}

}  // namespace panoda::trainer
