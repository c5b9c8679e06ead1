#include "panoda/losses.hpp"

#include <stdexcept>

namespace panoda::damods {

AdversarialLosses adversarial_losses(const ad::Value& src_map, const ad::Value& tgt_map,
                                     const std::vector<LabelGrid>* src_labels,
                                     PatchDiscriminator& d,
                                     const std::array<double, kNumClasses>& class_weights) {
  AdversarialLosses out;
  if (src_labels) out.seg = ops::weighted_cross_entropy(src_map, *src_labels, class_weights);

  // adv: push target maps toward the source label (0) through a frozen D
  d.params().set_requires_grad(false);
  out.adv = ops::bce_logits_const(d.forward(tgt_map), 0.0);
  d.params().set_requires_grad(true);

  // d: classify detached maps, source = 0, target = 1
  auto d_src = ops::bce_logits_const(d.forward(ad::detach(src_map)), 0.0);
  auto d_tgt = ops::bce_logits_const(d.forward(ad::detach(tgt_map)), 1.0);
  out.d = ops::add_scalars({d_src, d_tgt});
  return out;
}

ad::Value fcdam_entropy_loss(const ad::Value& f_s, const ad::Value& f_t, double lambda_ent_s,
                             double lambda_ent_t) {
  auto es = ops::scale(ops::entropy_conf_loss(f_s), lambda_ent_s);
  auto et = ops::scale(ops::entropy_conf_loss(f_t), lambda_ent_t);
  return ops::add_scalars({es, et});
}

TotalLoss combine_total_loss(const std::vector<LossTerm>& terms) {
  std::vector<ad::Value> g_terms, d_terms;
  for (const auto& t : terms) {
    if (!t.value) throw std::invalid_argument("combine_total_loss: term '" + t.name + "' has no value");
    auto scaled = ops::scale(t.value, t.lambda);
    const bool is_d = t.name.size() >= 2 && t.name.substr(t.name.size() - 2) == ".d";
    (is_d ? d_terms : g_terms).push_back(scaled);
  }
  if (g_terms.empty()) throw std::invalid_argument("combine_total_loss: no generator terms");
  TotalLoss total;
  total.g = ops::add_scalars(g_terms);
  if (!d_terms.empty()) total.d = ops::add_scalars(d_terms);
  return total;
}

LabelGrid boundary_targets(const LabelGrid& labels) {
  LabelGrid out(labels.h, labels.w, 0);
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      const int32_t c = labels.at(y, x);
      if (c == kIgnoreLabel) {
        out.at(y, x) = kIgnoreLabel;
        continue;
      }
      static const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int d = 0; d < 4; ++d) {
        const int ny = y + dy[d], nx = x + dx[d];
        if (ny < 0 || ny >= labels.h || nx < 0 || nx >= labels.w) continue;
        const int32_t nc = labels.at(ny, nx);
        if (nc != kIgnoreLabel && nc != c) {
          out.at(y, x) = 1;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace panoda::damods
