#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "panoda/losses.hpp"

using namespace panoda;
using namespace panoda::damods;

namespace {
ad::Value random_map(std::vector<int> shape, Rng& rng, bool req = false, double scale = 1.0) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return ad::make_leaf(std::move(t), req);
}
}  // namespace

TEST_CASE("discriminator: stride arithmetic 64x128 -> 2x4 and zero-init scores") {
  Rng rng(41);
  PatchDiscriminator d(rng, 19, 16);
  auto m = random_map({1, 19, 64, 128}, rng);
  auto s = d.forward(m);
  CHECK(s->val.shape() == std::vector<int>{1, 1, 2, 4});

  // zero final layer -> all-zero logits -> sigmoid 0.5
  d.params().find("d.c5.w")->val.fill(0.0);
  d.params().find("d.c5.b")->val.fill(0.0);
  auto s2 = d.forward(m);
  for (int64_t i = 0; i < s2->val.size(); ++i) CHECK(s2->val[i] == 0.0);

  // determinism
  auto s3 = d.forward(m);
  for (int64_t i = 0; i < s3->val.size(); ++i) CHECK(s3->val[i] == s2->val[i]);

  // channel mismatch
  CHECK_THROWS(d.forward(random_map({1, 7, 64, 128}, rng)));
}

TEST_CASE("adversarial_losses: zero-score forced values 2ln2 / ln2") {
  Rng rng(42);
  PatchDiscriminator d(rng, 19, 8);
  d.params().find("d.c5.w")->val.fill(0.0);
  d.params().find("d.c5.b")->val.fill(0.0);
  auto src = random_map({1, 19, 32, 32}, rng);
  auto tgt = random_map({1, 19, 32, 32}, rng);
  std::array<double, 19> unit{};
  unit.fill(1.0);
  auto losses = adversarial_losses(src, tgt, nullptr, d, unit);
  CHECK(losses.d->val[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(losses.adv->val[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_FALSE(losses.seg);
}

TEST_CASE("adversarial_losses: near-one-hot source logits drive L_seg toward zero") {
  Rng rng(43);
  PatchDiscriminator d(rng, 19, 8);
  Tensor logits({1, 19, 32, 32});
  std::vector<LabelGrid> labels(1, LabelGrid(32, 32));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const int c = static_cast<int>(rng.uniform_int(0, 18));
      labels[0].at(y, x) = c;
      logits.at4(0, c, y, x) = 200.0;  // huge margin
    }
  auto src = ad::make_leaf(logits);
  auto tgt = random_map({1, 19, 32, 32}, rng);
  std::array<double, 19> unit{};
  unit.fill(1.0);
  auto losses = adversarial_losses(src, tgt, &labels, d, unit);
  CHECK(losses.seg->val[0] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("adversarial_losses: random tiny instance matches loop oracles within 1e-8") {
  Rng rng(44);
  std::array<double, 19> weights{};
  for (int i = 0; i < 19; ++i) weights[i] = 0.4 + 0.05 * i;
  for (int trial = 0; trial < 10; ++trial) {
    PatchDiscriminator d(rng, 19, 4);
    auto src = random_map({2, 19, 4, 4}, rng, false, 2.0);
    auto tgt = random_map({2, 19, 4, 4}, rng, false, 2.0);
    std::vector<LabelGrid> labels(2, LabelGrid(4, 4));
    for (auto& g : labels)
      for (auto& v : g.v) v = static_cast<int32_t>(rng.uniform_int(0, 18));
    auto losses = adversarial_losses(src, tgt, &labels, d, weights);

    const double seg_oracle = oracles::loop_weighted_ce(src->val, labels, weights);
    ad::NoGradGuard ng;
    const Tensor d_src = d.forward(src)->val;
    const Tensor d_tgt = d.forward(tgt)->val;
    const double d_oracle = oracles::loop_bce_const(d_src, 0) + oracles::loop_bce_const(d_tgt, 1);
    const double adv_oracle = oracles::loop_bce_const(d_tgt, 0);
    CHECK(std::abs(losses.seg->val[0] - seg_oracle) < 1e-8);
    CHECK(std::abs(losses.d->val[0] - d_oracle) < 1e-8);
    CHECK(std::abs(losses.adv->val[0] - adv_oracle) < 1e-8);
  }
}

TEST_CASE("adversarial_losses: all-ignore source label map is an error") {
  Rng rng(45);
  PatchDiscriminator d(rng, 19, 4);
  auto src = random_map({1, 19, 4, 4}, rng);
  auto tgt = random_map({1, 19, 4, 4}, rng);
  std::vector<LabelGrid> labels(1, LabelGrid(4, 4, kIgnoreLabel));
  std::array<double, 19> unit{};
  unit.fill(1.0);
  CHECK_THROWS(adversarial_losses(src, tgt, &labels, d, unit));
}

TEST_CASE("gradient isolation: dL_D/dG = 0 and dL_adv/dD = 0") {
  Rng rng(46);
  PatchDiscriminator d(rng, 19, 4);
  auto src = random_map({1, 19, 4, 4}, rng, true);
  auto tgt = random_map({1, 19, 4, 4}, rng, true);
  std::array<double, 19> unit{};
  unit.fill(1.0);
  auto losses = adversarial_losses(src, tgt, nullptr, d, unit);

  // L_adv: gradient reaches the target map but no discriminator parameter
  d.params().zero_grad();
  ad::backward(losses.adv);
  CHECK(tgt->grad_allocated);
  for (const auto& p : d.params().all()) {
    double norm = 0.0;
    if (p->grad_allocated)
      for (int64_t i = 0; i < p->grad.size(); ++i) norm += std::abs(p->grad[i]);
    CHECK(norm == 0.0);
  }

  // L_d: discriminator parameters get gradients, the (detached) maps do not
  src->zero_grad();
  tgt->zero_grad();
  src->grad_allocated = false;
  tgt->grad_allocated = false;
  ad::backward(losses.d);
  CHECK_FALSE(src->grad_allocated);
  CHECK_FALSE(tgt->grad_allocated);
  double dnorm = 0.0;
  for (const auto& p : d.params().all())
    if (p->grad_allocated)
      for (int64_t i = 0; i < p->grad.size(); ++i) dnorm += std::abs(p->grad[i]);
  CHECK(dnorm > 0.0);
}

TEST_CASE("label convention: L_adv decreases as the target score approaches 0") {
  Rng rng(47);
  PatchDiscriminator d(rng, 19, 4);
  d.params().find("d.c5.w")->val.fill(0.0);
  auto tgt = random_map({1, 19, 32, 32}, rng);
  auto bias = d.params().find("d.c5.b");
  double prev = 1e300;
  std::array<double, 19> unit{};
  unit.fill(1.0);
  for (double beta : {2.0, 1.0, 0.0, -1.0, -2.0}) {  // sigmoid score falls toward 0
    bias->val[0] = beta;
    auto losses = adversarial_losses(tgt, tgt, nullptr, d, unit);
    CHECK(losses.adv->val[0] < prev);
    prev = losses.adv->val[0];
  }
}

TEST_CASE("fcdam_entropy_loss: forced value, limits, lambda composition") {
  auto fs = ad::make_leaf(Tensor::zeros({1, 1, 2, 3}));
  auto ft = ad::make_leaf(Tensor::full({1, 1, 2, 3}, 300.0));
  auto l = fcdam_entropy_loss(fs, ft, 0.001, 0.002);
  CHECK(l->val[0] == doctest::Approx(0.001 * 6 * 0.5 * std::log(2.0)).epsilon(1e-10));

  Rng rng(48);
  auto f1 = random_map({2, 3, 2, 2}, rng, true, 2.0);
  auto f2 = random_map({2, 3, 2, 2}, rng, true, 2.0);
  auto l2 = fcdam_entropy_loss(f1, f2, 0.5, 0.25);
  const double expect = 0.5 * oracles::loop_entropy(f1->val) + 0.25 * oracles::loop_entropy(f2->val);
  CHECK(l2->val[0] == doctest::Approx(expect).epsilon(1e-12));
  auto build = [&] { return fcdam_entropy_loss(f1, f2, 0.5, 0.25); };
  CHECK(oracles::grad_check(build, {f1, f2}) < 1e-5);
}

TEST_CASE("combine_total_loss: published lambda examples and error paths") {
  auto seg = ad::make_leaf(Tensor::scalar(2.0), true);
  auto adv = ad::make_leaf(Tensor::scalar(3.0), true);
  auto dls = ad::make_leaf(Tensor::scalar(5.0), true);

  // single SDAM with lambda_seg=1.0, lambda_adv=0.001
  auto total = combine_total_loss({{"S.seg", 1.0, seg}, {"S.adv", 0.001, adv}, {"S.d", 1.0, dls}});
  CHECK(total.g->val[0] == doctest::Approx(2.0 + 0.001 * 3.0).epsilon(1e-15));
  CHECK(total.d->val[0] == doctest::Approx(5.0).epsilon(1e-15));

  // ADAM terms weighted 0.1 / 0.0002
  auto total2 = combine_total_loss({{"A.seg", 0.1, seg}, {"A.adv", 0.0002, adv}});
  CHECK(total2.g->val[0] == doctest::Approx(0.1 * 2.0 + 0.0002 * 3.0).epsilon(1e-15));
  CHECK_FALSE(total2.d);

  // RCDAM pre-region supervised term weighted 1.5
  auto total3 = combine_total_loss({{"R1.seg", 1.5, seg}});
  CHECK(total3.g->val[0] == doctest::Approx(3.0).epsilon(1e-15));

  CHECK_THROWS(combine_total_loss({{"S.seg", 1.0, nullptr}}));
  CHECK_THROWS(combine_total_loss({{"S.d", 1.0, dls}}));  // no generator terms
}

TEST_CASE("boundary_targets: 4-neighbour rule with ignore propagation") {
  LabelGrid lab(3, 4, 2);
  lab.at(0, 0) = 1;
  lab.at(2, 3) = kIgnoreLabel;
  auto b = boundary_targets(lab);
  CHECK(b.at(0, 0) == 1);                 // differs from right/below neighbours
  CHECK(b.at(0, 1) == 1);                 // adjacent to the 1
  CHECK(b.at(1, 2) == 0);                 // interior of the 2-region
  CHECK(b.at(2, 3) == kIgnoreLabel);      // ignore stays ignore
  CHECK(b.at(1, 3) == 0);                 // ignore neighbours do not create boundaries
}

TEST_CASE("losses stay finite under random fuzzing") {
  Rng rng(49);
  std::array<double, 19> unit{};
  unit.fill(1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor t({1, 19, 2, 2});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-50.0, 50.0);
    auto v = ad::make_leaf(std::move(t));
    std::vector<LabelGrid> lab(1, LabelGrid(2, 2));
    for (auto& x : lab[0].v) x = static_cast<int32_t>(rng.uniform_int(0, 18));
    CHECK(std::isfinite(ops::weighted_cross_entropy(v, lab, unit)->val[0]));
    CHECK(std::isfinite(ops::bce_logits_const(v, 1.0)->val[0]));
    CHECK(std::isfinite(ops::bce_logits_const(v, 0.0)->val[0]));
    CHECK(std::isfinite(ops::entropy_conf_loss(v)->val[0]));
  }
}
