#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "panoda/attention.hpp"

using namespace panoda;
using ad::Value;

namespace {
Value random_feat(std::vector<int> shape, Rng& rng, bool req = true) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 1.0);
  return ad::make_leaf(std::move(t), req);
}
}  // namespace

TEST_CASE("position attention: single pixel is identity with A=[[1]]") {
  nn::ParamStore ps;
  attention::PositionAttention pa(ps, "pa");
  Rng rng(21);
  auto f = random_feat({1, 3, 1, 1}, rng);
  auto res = pa.forward(f);
  CHECK(res.weights.at3(0, 0, 0) == doctest::Approx(1.0));
  for (int c = 0; c < 3; ++c)
    CHECK(res.out->val.at4(0, c, 0, 0) == doctest::Approx(f->val.at4(0, c, 0, 0)));
}

TEST_CASE("position attention: identical pixels share symmetric rows") {
  nn::ParamStore ps;
  attention::PositionAttention pa(ps, "pa");
  Tensor t({1, 2, 1, 2});
  t.at4(0, 0, 0, 0) = 0.7;
  t.at4(0, 0, 0, 1) = 0.7;
  t.at4(0, 1, 0, 0) = -0.2;
  t.at4(0, 1, 0, 1) = -0.2;
  auto res = pa.forward(ad::make_leaf(t));
  CHECK(res.weights.at3(0, 0, 0) == doctest::Approx(0.5));
  CHECK(res.weights.at3(0, 0, 1) == doctest::Approx(0.5));
  CHECK(res.weights.at3(0, 1, 0) == doctest::Approx(0.5));
}

TEST_CASE("position attention matches four-nested-loop oracle within 1e-10") {
  nn::ParamStore ps;
  attention::PositionAttention pa(ps, "pa");
  pa.gamma->val[0] = 1.0;  // expose the attended component as out - f
  Rng rng(22);
  auto f = random_feat({1, 3, 2, 2}, rng);
  auto res = pa.forward(f);
  Tensor oracle = oracles::loop_position_attention(f->val);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        const double attended = res.out->val.at4(0, c, y, x) - f->val.at4(0, c, y, x);
        CHECK(std::abs(attended - oracle.at4(0, c, y, x)) < 1e-10);
      }
}

TEST_CASE("channel attention: single channel identity, loop oracle, permutation equivariance") {
  nn::ParamStore ps;
  attention::ChannelAttention ca(ps, "ca");
  Rng rng(23);

  auto f1 = random_feat({1, 1, 2, 3}, rng);
  auto r1 = ca.forward(f1);
  CHECK(r1.weights.at3(0, 0, 0) == doctest::Approx(1.0));
  for (int64_t i = 0; i < f1->val.size(); ++i)
    CHECK(r1.out->val[i] == doctest::Approx(f1->val[i]));

  ca.gamma->val[0] = 1.0;
  auto f = random_feat({1, 3, 2, 2}, rng);
  auto res = ca.forward(f);
  Tensor oracle = oracles::loop_channel_attention(f->val);
  for (int64_t i = 0; i < f->val.size(); ++i)
    CHECK(std::abs((res.out->val[i] - f->val[i]) - oracle[i]) < 1e-10);

  // permuting channels permutes the attended output identically
  const int perm[3] = {2, 0, 1};
  Tensor fp({1, 3, 2, 2});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) fp.at4(0, c, y, x) = f->val.at4(0, perm[c], y, x);
  auto resp = ca.forward(ad::make_leaf(fp));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        CHECK(std::abs(resp.out->val.at4(0, c, y, x) - res.out->val.at4(0, perm[c], y, x)) < 1e-10);
}

TEST_CASE("attention invariants: row stochasticity and spatial permutation equivariance") {
  nn::ParamStore ps;
  attention::PositionAttention pa(ps, "pa");
  attention::ChannelAttention ca(ps, "ca");
  pa.gamma->val[0] = 0.8;
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 2 + static_cast<int>(rng.uniform_int(0, 2));
    const int w = 2 + static_cast<int>(rng.uniform_int(0, 2));
    const int c = 2 + static_cast<int>(rng.uniform_int(0, 3));
    auto f = random_feat({1, c, h, w}, rng);
    auto rp = pa.forward(f);
    auto rc = ca.forward(f);
    for (int q = 0; q < h * w; ++q) {
      double s = 0.0;
      for (int k = 0; k < h * w; ++k) {
        s += rp.weights.at3(0, q, k);
        CHECK(rp.weights.at3(0, q, k) >= 0.0);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    for (int a = 0; a < c; ++a) {
      double s = 0.0;
      for (int b = 0; b < c; ++b) s += rc.weights.at3(0, a, b);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }

    // random pixel permutation applied to the input permutes the output
    const int hw = h * w;
    std::vector<int> perm(hw);
    for (int i = 0; i < hw; ++i) perm[i] = i;
    for (int i = hw - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    Tensor fp({1, c, h, w});
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p)
        fp.at4(0, ch, p / w, p % w) = f->val.at4(0, ch, perm[p] / w, perm[p] % w);
    auto rpp = pa.forward(ad::make_leaf(fp));
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p)
        CHECK(std::abs(rpp.out->val.at4(0, ch, p / w, p % w) -
                       rp.out->val.at4(0, ch, perm[p] / w, perm[p] % w)) < 1e-10);
  }
}

TEST_CASE("dual attention: identity at init, channel contract, gradcheck") {
  nn::ParamStore ps;
  Rng rng(25);
  attention::DualAttention da(ps, "da", rng, 4);
  auto f = random_feat({2, 4, 2, 3}, rng);
  auto res = da.forward(f);
  CHECK(res.fused->val.shape() == f->val.shape());
  for (int64_t i = 0; i < f->val.size(); ++i)
    CHECK(res.fused->val[i] == doctest::Approx(f->val[i]).epsilon(1e-12));

  // make it non-trivial, then finite-difference the input gradient
  da.pos.gamma->val[0] = 0.3;
  da.chan.gamma->val[0] = -0.2;
  for (int64_t i = 0; i < da.fuse.w->val.size(); ++i) da.fuse.w->val[i] += rng.normal(0.0, 0.05);
  auto small = random_feat({1, 3, 2, 2}, rng);
  nn::ParamStore ps2;
  attention::DualAttention da2(ps2, "da2", rng, 3);
  da2.pos.gamma->val[0] = 0.4;
  da2.chan.gamma->val[0] = 0.2;
  auto build = [&] { return ops::mean(da2.forward(small).fused); };
  CHECK(oracles::grad_check(build, {small, da2.pos.gamma, da2.chan.gamma, da2.fuse.w, da2.fuse.b}) <
        1e-4);
}

TEST_CASE("query_attention_map: row extraction, sums, uniform case, bounds") {
  nn::ParamStore ps;
  attention::PositionAttention pa(ps, "pa");

  Tensor t({1, 2, 1, 1});
  t.at4(0, 0, 0, 0) = 1.0;
  auto res1 = pa.forward(ad::make_leaf(t));
  auto m1 = attention::query_attention_map(res1.weights, 0, 0, 0, 1, 1);
  CHECK(m1.at(0, 0) == doctest::Approx(1.0));

  Tensor tc = Tensor::full({1, 3, 2, 4}, 0.37);  // identical features everywhere
  auto res2 = pa.forward(ad::make_leaf(tc));
  auto m2 = attention::query_attention_map(res2.weights, 0, 1, 2, 2, 4);
  double sum = 0.0;
  for (double v : m2.v) {
    CHECK(v == doctest::Approx(1.0 / 8.0));
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0));
  CHECK_THROWS(attention::query_attention_map(res2.weights, 0, 2, 0, 2, 4));
}

TEST_CASE("region construction: uniform map gives one region, split gives two") {
  Tensor b1 = Tensor::full({1, 1, 4, 6}, -3.0);  // no boundary
  Tensor c1({1, 19, 4, 6});
  Tensor feat({1, 2, 4, 6});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) c1.at4(0, 5, y, x) = 2.0;  // argmax = 5 everywhere
  auto rdm = attention::region_construction(b1, c1, feat);
  CHECK(rdm.num_regions == 1);
  CHECK(rdm.region_class[0] == 5);

  // vertical boundary line at x=3 separating two classes
  Tensor c2({1, 19, 4, 6});
  Tensor b2 = Tensor::full({1, 1, 4, 6}, -3.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      c2.at4(0, x < 3 ? 1 : 2, y, x) = 2.0;
      if (x == 3) b2.at4(0, 0, y, x) = 3.0;
    }
  auto rdm2 = attention::region_construction(b2, c2, feat);
  CHECK(rdm2.num_regions == 2);
  // boundary pixels absorbed: partition is total
  for (int32_t id : rdm2.region_id.v) {
    CHECK(id >= 0);
    CHECK(id < 2);
  }
}

TEST_CASE("region construction: all-boundary map degenerates to a single region") {
  Tensor b1 = Tensor::full({1, 1, 3, 3}, 5.0);
  Tensor c1({1, 19, 3, 3});
  Tensor feat({1, 2, 3, 3});
  auto rdm = attention::region_construction(b1, c1, feat);
  CHECK(rdm.num_regions == 1);
  for (int32_t id : rdm.region_id.v) CHECK(id == 0);
}

TEST_CASE("region construction: random toy maps match flood-fill oracle") {
  Rng rng(26);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor b1({1, 1, 8, 8});
    Tensor c1({1, 19, 8, 8});
    Tensor feat({1, 3, 8, 8});
    LabelGrid sem(8, 8);
    std::vector<bool> blocked(64);
    bool any_open = false;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const int cls = static_cast<int>(rng.uniform_int(0, 2));
        sem.at(y, x) = cls;
        c1.at4(0, cls, y, x) = 3.0;
        const bool bnd = rng.bernoulli(0.25);
        blocked[static_cast<size_t>(y) * 8 + x] = bnd;
        b1.at4(0, 0, y, x) = bnd ? 2.0 : -2.0;
        if (!bnd) any_open = true;
        for (int ch = 0; ch < 3; ++ch) feat.at4(0, ch, y, x) = rng.normal(0, 1);
      }
    if (!any_open) continue;
    auto rdm = attention::region_construction(b1, c1, feat);
    CHECK(rdm.num_regions == oracles::flood_fill_region_count(sem, blocked));
    // partition property and contiguity of ids
    std::vector<bool> seen(static_cast<size_t>(rdm.num_regions), false);
    for (int32_t id : rdm.region_id.v) {
      REQUIRE(id >= 0);
      REQUIRE(id < rdm.num_regions);
      seen[static_cast<size_t>(id)] = true;
    }
    for (bool s : seen) CHECK(s);
  }
}

TEST_CASE("region interaction: K=1 adds twice the prototype; constant map uniform update") {
  Rng rng(27);
  auto f = random_feat({1, 3, 2, 3}, rng);
  Tensor b1 = Tensor::full({1, 1, 2, 3}, -1.0);
  Tensor c1({1, 19, 2, 3});
  auto rdm = attention::region_construction(b1, c1, f->val);
  REQUIRE(rdm.num_regions == 1);
  auto out = attention::region_interaction(f, rdm);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) mean += f->val.at4(0, c, y, x);
    mean /= 6.0;
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x)
        CHECK(out->val.at4(0, c, y, x) ==
              doctest::Approx(f->val.at4(0, c, y, x) + 2.0 * mean).epsilon(1e-12));
  }

  auto fc = ad::make_leaf(Tensor::full({1, 2, 2, 2}, 0.9));
  Tensor b1c = Tensor::full({1, 1, 2, 2}, -1.0);
  Tensor c1c({1, 19, 2, 2});
  auto rdmc = attention::region_construction(b1c, c1c, fc->val);
  auto outc = attention::region_interaction(fc, rdmc);
  for (int64_t i = 0; i < outc->val.size(); ++i)
    CHECK(outc->val[i] == doctest::Approx(0.9 * 3.0).epsilon(1e-12));
}

TEST_CASE("region interaction: two-region scalar toy matches hand computation") {
  // region 0 = left column pair (value a), region 1 = right (value b)
  const double a = 0.4, b = -1.1;
  Tensor ft({1, 1, 1, 4});
  ft.at4(0, 0, 0, 0) = a;
  ft.at4(0, 0, 0, 1) = a;
  ft.at4(0, 0, 0, 2) = b;
  ft.at4(0, 0, 0, 3) = b;
  Tensor b1({1, 1, 1, 4});
  b1.fill(-2.0);
  Tensor c1({1, 19, 1, 4});
  c1.at4(0, 3, 0, 2) = 5.0;
  c1.at4(0, 3, 0, 3) = 5.0;  // split classes 0|3
  auto f = ad::make_leaf(ft, true);
  auto rdm = attention::region_construction(b1, c1, ft);
  REQUIRE(rdm.num_regions == 2);
  auto out = attention::region_interaction(f, rdm);

  const double e00 = std::exp(a * a - std::max(a * a, a * b));
  const double e01 = std::exp(a * b - std::max(a * a, a * b));
  const double s00 = e00 / (e00 + e01), s01 = e01 / (e00 + e01);
  const double p2_0 = s00 * a + s01 * b;
  CHECK(out->val.at4(0, 0, 0, 0) == doctest::Approx(a + a + p2_0).epsilon(1e-12));

  const double f10 = std::exp(b * a - std::max(b * a, b * b));
  const double f11 = std::exp(b * b - std::max(b * a, b * b));
  const double p2_1 = (f10 * a + f11 * b) / (f10 + f11);
  CHECK(out->val.at4(0, 0, 0, 3) == doctest::Approx(b + b + p2_1).epsilon(1e-12));

  auto build = [&] { return ops::mean(attention::region_interaction(f, rdm)); };
  CHECK(oracles::grad_check(build, {f}) < 1e-4);
}
