#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "panoda/discriminator.hpp"

namespace panoda::damods {

// 0 = source/pinhole, 1 = target/panoramic.
enum class DomainLabel : int { source = 0, target = 1 };

// Per-module lambda entry of the joint loss.
struct ModuleLambdas {
  double seg = 1.0;
  double adv = 1e-3;
  double d = 1.0;
};

// The full lambda table. sdam/adam follow the published 1.0/0.001 and
// 0.1/0.0002 pairs; rcdam stage 1 carries the 1.5 pre-region weight.
struct LossWeights {
  ModuleLambdas sdam{1.0, 1e-3, 1.0};
  ModuleLambdas adam{0.1, 2e-4, 1.0};
  ModuleLambdas rcdam1{1.5, 1e-3, 1.0};
  ModuleLambdas rcdam2{1.0, 1e-3, 1.0};
  double boundary = 1.0;
  double ent_s = 1e-3;
  double ent_t = 1e-3;
};

struct AdversarialLosses {
  ad::Value seg;  // null when no supervised map was requested
  ad::Value adv;
  ad::Value d;
};

// The Eq. 1-3 bundle for one discriminator:
//   seg  = weighted CE(src_logits, y_s), only when y_s is given;
//   adv  = BCE(D(tgt_map), source-label 0) with D's parameters frozen;
//   d    = BCE(D(detach(src_map)), 0) + BCE(D(detach(tgt_map)), 1).
AdversarialLosses adversarial_losses(const ad::Value& src_map, const ad::Value& tgt_map,
                                     const std::vector<LabelGrid>* src_labels,
                                     PatchDiscriminator& d,
                                     const std::array<double, kNumClasses>& class_weights);

// lambda_ent_s * L_ent(f_s) + lambda_ent_t * L_ent(f_t); one-sided
// -phi log phi entropy, summed over elements, per batch item.
ad::Value fcdam_entropy_loss(const ad::Value& f_s, const ad::Value& f_t, double lambda_ent_s,
                             double lambda_ent_t);

// One named, weighted term of the joint objective.
struct LossTerm {
  std::string name;   // e.g. "S.seg", "A.adv", "R2.d", "F.ent"
  double lambda = 1.0;
  ad::Value value;
};

struct TotalLoss {
  ad::Value g;  // generator objective (seg + adv + entropy terms)
  ad::Value d;  // discriminator objective (d terms); null if none
};

// L(G,D) = sum lambda_seg L_seg + sum lambda_adv L_adv (+ entropy) | sum lambda_d L_d.
// Terms whose name ends in ".d" go to the discriminator side, all else to G.
// Throws if a term carries no value or the G side is empty.
TotalLoss combine_total_loss(const std::vector<LossTerm>& terms);

// Boundary ground truth from a semantic label map: 1 where any 4-neighbour has
// a different class id, 0 elsewhere, ignore where the label itself is ignore.
LabelGrid boundary_targets(const LabelGrid& labels);

}  // namespace panoda::damods
