#include <cmath>
#include <stdexcept>

#include "panoda/ops.hpp"

namespace panoda::ops {

using ad::Node;
using ad::op_node;

namespace {
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
inline double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Value weighted_cross_entropy(const Value& logits, const std::vector<LabelGrid>& labels,
                             const std::array<double, kNumClasses>& weights) {
  const Tensor& t = logits->val;
  if (t.rank() != 4 || t.dim(1) != kNumClasses)
    throw std::invalid_argument("weighted_cross_entropy: logits must be [N,19,H,W]");
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("weighted_cross_entropy: label batch size mismatch");
  const int64_t hw = int64_t(h) * w;

  // Cache softmax probabilities for the backward pass.
  auto probs = std::make_shared<Tensor>(t.shape());
  softmax_channels(t, *probs);

  double loss_acc = 0.0, weight_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const LabelGrid& lab = labels[i];
    if (lab.h != h || lab.w != w)
      throw std::invalid_argument("weighted_cross_entropy: label shape mismatch");
    for (int64_t p = 0; p < hw; ++p) {
      const int32_t y = lab.v[static_cast<size_t>(p)];
      if (y == kIgnoreLabel) continue;
      if (y < 0 || y >= kNumClasses)
        throw std::invalid_argument("weighted_cross_entropy: label value " + std::to_string(y) +
                                    " out of range");
      const double wgt = weights[static_cast<size_t>(y)];
      const double prob = (*probs)[int64_t(i) * c * hw + int64_t(y) * hw + p];
      loss_acc += wgt * (-std::log(std::max(prob, 1e-300)));
      weight_sum += wgt;
    }
  }
  if (weight_sum <= 0.0)
    throw std::invalid_argument("weighted_cross_entropy: every pixel is ignored");
  const double loss = loss_acc / weight_sum;

  auto labels_copy = std::make_shared<std::vector<LabelGrid>>(labels);
  return op_node(Tensor::scalar(loss), {logits},
                 [probs, labels_copy, weights, n, c, hw, weight_sum](Node& self) {
    auto& px = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = px->ensure_grad();
    const double scale = self.grad[0] / weight_sum;
    for (int i = 0; i < n; ++i) {
      const LabelGrid& lab = (*labels_copy)[static_cast<size_t>(i)];
      for (int64_t p = 0; p < hw; ++p) {
        const int32_t y = lab.v[static_cast<size_t>(p)];
        if (y == kIgnoreLabel) continue;
        const double wgt = weights[static_cast<size_t>(y)] * scale;
        double* gp = g.data() + int64_t(i) * c * hw + p;
        const double* pp = probs->data() + int64_t(i) * c * hw + p;
        for (int ch = 0; ch < c; ++ch) gp[ch * hw] += wgt * pp[ch * hw];
        gp[int64_t(y) * hw] -= wgt;
      }
    }
  }, "weighted_ce");
}

Value bce_logits_const(const Value& logits, double target01) {
  if (target01 != 0.0 && target01 != 1.0)
    throw std::invalid_argument("bce_logits_const: target must be 0 or 1");
  const Tensor& t = logits->val;
  const int64_t m = t.size();
  if (m == 0) throw std::invalid_argument("bce_logits_const: empty input");
  double acc = 0.0;
  for (int64_t i = 0; i < m; ++i)
    acc += target01 * softplus(-t[i]) + (1.0 - target01) * softplus(t[i]);
  const double inv = 1.0 / static_cast<double>(m);
  return op_node(Tensor::scalar(acc * inv), {logits}, [target01, inv](Node& self) {
    auto& px = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = px->ensure_grad();
    const double scale = self.grad[0] * inv;
    const int64_t m = g.size();
    for (int64_t i = 0; i < m; ++i) g[i] += scale * (sigmoid_d(px->val[i]) - target01);
  }, "bce_logits_const");
}

Value bce_logits_map(const Value& logits, const std::vector<LabelGrid>& targets,
                     double pos_weight) {
  const Tensor& t = logits->val;
  if (t.rank() != 4 || t.dim(1) != 1)
    throw std::invalid_argument("bce_logits_map: logits must be [N,1,H,W]");
  const int n = t.dim(0), h = t.dim(2), w = t.dim(3);
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("bce_logits_map: target batch size mismatch");
  const int64_t hw = int64_t(h) * w;
  double acc = 0.0, wsum = 0.0;
  for (int i = 0; i < n; ++i) {
    const LabelGrid& tg = targets[static_cast<size_t>(i)];
    if (tg.h != h || tg.w != w) throw std::invalid_argument("bce_logits_map: shape mismatch");
    for (int64_t p = 0; p < hw; ++p) {
      const int32_t y = tg.v[static_cast<size_t>(p)];
      if (y == kIgnoreLabel) continue;
      if (y != 0 && y != 1)
        throw std::invalid_argument("bce_logits_map: target must be 0, 1 or ignore");
      const double x = t[int64_t(i) * hw + p];
      const double wgt = (y == 1) ? pos_weight : 1.0;
      acc += wgt * (y == 1 ? softplus(-x) : softplus(x));
      wsum += wgt;
    }
  }
  if (wsum <= 0.0) throw std::invalid_argument("bce_logits_map: every pixel is ignored");
  auto targets_copy = std::make_shared<std::vector<LabelGrid>>(targets);
  return op_node(Tensor::scalar(acc / wsum), {logits},
                 [targets_copy, pos_weight, n, hw, wsum](Node& self) {
    auto& px = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = px->ensure_grad();
    const double scale = self.grad[0] / wsum;
    for (int i = 0; i < n; ++i) {
      const LabelGrid& tg = (*targets_copy)[static_cast<size_t>(i)];
      for (int64_t p = 0; p < hw; ++p) {
        const int32_t y = tg.v[static_cast<size_t>(p)];
        if (y == kIgnoreLabel) continue;
        const double wgt = (y == 1) ? pos_weight : 1.0;
        const double x = px->val[int64_t(i) * hw + p];
        g[int64_t(i) * hw + p] += scale * wgt * (sigmoid_d(x) - y);
      }
    }
  }, "bce_logits_map");
}

Value entropy_conf_loss(const Value& x) {
  const Tensor& t = x->val;
  if (t.rank() < 1) throw std::invalid_argument("entropy_conf_loss: empty input");
  const int n = t.dim(0);
  const int64_t m = t.size();
  double acc = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    // -phi log phi == phi * softplus(-x), numerically stable at both tails
    acc += sigmoid_d(t[i]) * softplus(-t[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return op_node(Tensor::scalar(acc * inv_n), {x}, [inv_n](Node& self) {
    auto& px = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = px->ensure_grad();
    const double scale = self.grad[0] * inv_n;
    const int64_t m = g.size();
    for (int64_t i = 0; i < m; ++i) {
      const double v = px->val[i];
      const double phi = sigmoid_d(v);
      g[i] += scale * phi * (1.0 - phi) * (softplus(-v) - 1.0);
    }
  }, "entropy_conf");
}

Value region_mean(const Value& f, const LabelGrid& region_ids, int num_regions) {
  const Tensor& t = f->val;
  if (t.rank() != 4 || t.dim(0) != 1)
    throw std::invalid_argument("region_mean: [1,C,h,w] tensor required");
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (region_ids.h != h || region_ids.w != w)
    throw std::invalid_argument("region_mean: region map does not cover the feature extent");
  const int64_t hw = int64_t(h) * w;
  std::vector<int64_t> counts(static_cast<size_t>(num_regions), 0);
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t k = region_ids.v[static_cast<size_t>(p)];
    if (k < 0 || k >= num_regions) throw std::invalid_argument("region_mean: region id out of range");
    ++counts[static_cast<size_t>(k)];
  }
  for (int k = 0; k < num_regions; ++k)
    if (counts[static_cast<size_t>(k)] == 0)
      throw std::invalid_argument("region_mean: region " + std::to_string(k) + " is empty");

  Tensor out({1, num_regions, c});
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t k = region_ids.v[static_cast<size_t>(p)];
    for (int ch = 0; ch < c; ++ch) out.at3(0, k, ch) += t[int64_t(ch) * hw + p];
  }
  for (int k = 0; k < num_regions; ++k)
    for (int ch = 0; ch < c; ++ch)
      out.at3(0, k, ch) /= static_cast<double>(counts[static_cast<size_t>(k)]);

  auto ids = std::make_shared<LabelGrid>(region_ids);
  auto cnts = std::make_shared<std::vector<int64_t>>(std::move(counts));
  return op_node(std::move(out), {f}, [ids, cnts, c, hw](Node& self) {
    auto& px = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = px->ensure_grad();
    for (int64_t p = 0; p < hw; ++p) {
      const int32_t k = ids->v[static_cast<size_t>(p)];
      const double inv = 1.0 / static_cast<double>((*cnts)[static_cast<size_t>(k)]);
      for (int ch = 0; ch < c; ++ch) g[int64_t(ch) * hw + p] += self.grad.at3(0, k, ch) * inv;
    }
  }, "region_mean");
}

Value region_broadcast(const Value& prototypes, const LabelGrid& region_ids) {
  const Tensor& t = prototypes->val;
  if (t.rank() != 3 || t.dim(0) != 1)
    throw std::invalid_argument("region_broadcast: [1,K,C] tensor required");
  const int k = t.dim(1), c = t.dim(2);
  const int h = region_ids.h, w = region_ids.w;
  const int64_t hw = int64_t(h) * w;
  Tensor out({1, c, h, w});
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t r = region_ids.v[static_cast<size_t>(p)];
    if (r < 0 || r >= k) throw std::invalid_argument("region_broadcast: region id out of range");
    for (int ch = 0; ch < c; ++ch) out[int64_t(ch) * hw + p] = t.at3(0, r, ch);
  }
  auto ids = std::make_shared<LabelGrid>(region_ids);
  return op_node(std::move(out), {prototypes}, [ids, c, hw](Node& self) {
    auto& pp = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pp->ensure_grad();
    for (int64_t p = 0; p < hw; ++p) {
      const int32_t r = ids->v[static_cast<size_t>(p)];
      for (int ch = 0; ch < c; ++ch) g.at3(0, r, ch) += self.grad[int64_t(ch) * hw + p];
    }
  }, "region_broadcast");
}

}  // namespace panoda::ops
