#include "oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace oracles {

double loop_weighted_ce(const Tensor& logits, const std::vector<LabelGrid>& labels,
                        const std::array<double, 19>& weights) {
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  double acc = 0.0, wsum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int32_t lab = labels[i].at(y, x);
        if (lab == 255) continue;
        double denom = 0.0;
        for (int ch = 0; ch < c; ++ch) denom += std::exp(logits.at4(i, ch, y, x));
        const double p = std::exp(logits.at4(i, lab, y, x)) / denom;
        acc += weights[lab] * (-std::log(p));
        wsum += weights[lab];
      }
    }
  }
  return acc / wsum;
}

double loop_bce_const(const Tensor& logits, int target01) {
  double acc = 0.0;
  for (int64_t i = 0; i < logits.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-logits[i]));
    acc += target01 ? -std::log(s) : -std::log(1.0 - s);
  }
  return acc / static_cast<double>(logits.size());
}

double loop_entropy(const Tensor& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double phi = 1.0 / (1.0 + std::exp(-x[i]));
    acc -= phi * std::log(phi);
  }
  return acc / static_cast<double>(x.dim(0));
}

Tensor loop_position_attention(const Tensor& f) {
  const int c = f.dim(1), h = f.dim(2), w = f.dim(3);
  const int hw = h * w;
  // energy[q][k] = <pixel q, pixel k> over channels
  std::vector<std::vector<double>> att(hw, std::vector<double>(hw, 0.0));
  for (int q = 0; q < hw; ++q) {
    double mx = -1e300;
    for (int k = 0; k < hw; ++k) {
      double e = 0.0;
      for (int ch = 0; ch < c; ++ch)
        e += f.at4(0, ch, q / w, q % w) * f.at4(0, ch, k / w, k % w);
      att[q][k] = e;
      mx = std::max(mx, e);
    }
    double denom = 0.0;
    for (int k = 0; k < hw; ++k) {
      att[q][k] = std::exp(att[q][k] - mx);
      denom += att[q][k];
    }
    for (int k = 0; k < hw; ++k) att[q][k] /= denom;
  }
  Tensor out({1, c, h, w});
  for (int q = 0; q < hw; ++q)
    for (int ch = 0; ch < c; ++ch) {
      double v = 0.0;
      for (int k = 0; k < hw; ++k) v += att[q][k] * f.at4(0, ch, k / w, k % w);
      out.at4(0, ch, q / w, q % w) = v;
    }
  return out;
}

Tensor loop_channel_attention(const Tensor& f) {
  const int c = f.dim(1), h = f.dim(2), w = f.dim(3);
  const int hw = h * w;
  std::vector<std::vector<double>> att(c, std::vector<double>(c, 0.0));
  for (int a = 0; a < c; ++a) {
    double mx = -1e300;
    for (int b = 0; b < c; ++b) {
      double e = 0.0;
      for (int p = 0; p < hw; ++p) e += f.at4(0, a, p / w, p % w) * f.at4(0, b, p / w, p % w);
      att[a][b] = e;
      mx = std::max(mx, e);
    }
    double denom = 0.0;
    for (int b = 0; b < c; ++b) {
      att[a][b] = std::exp(att[a][b] - mx);
      denom += att[a][b];
    }
    for (int b = 0; b < c; ++b) att[a][b] /= denom;
  }
  Tensor out({1, c, h, w});
  for (int a = 0; a < c; ++a)
    for (int p = 0; p < hw; ++p) {
      double v = 0.0;
      for (int b = 0; b < c; ++b) v += att[a][b] * f.at4(0, b, p / w, p % w);
      out.at4(0, a, p / w, p % w) = v;
    }
  return out;
}

int flood_fill_region_count(const LabelGrid& values, const std::vector<bool>& blocked) {
  const int h = values.h, w = values.w;
  std::vector<bool> seen(static_cast<size_t>(h) * w, false);
  int count = 0;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      if (seen[idx] || blocked[idx]) continue;
      ++count;
      seen[idx] = true;
      stack.push_back(idx);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cy = cur / w, cx = cur % w;
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int nidx = ny * w + nx;
          if (seen[nidx] || blocked[nidx]) continue;
          if (values.at(ny, nx) != values.at(cy, cx)) continue;
          seen[nidx] = true;
          stack.push_back(nidx);
        }
      }
    }
  }
  return count;
}

double bilinear_at(const Tensor& x, int n, int c, double sy, double sx) {
  const int h = x.dim(2), w = x.dim(3);
  int y0 = static_cast<int>(std::floor(sy));
  int x0 = static_cast<int>(std::floor(sx));
  y0 = std::max(0, std::min(y0, h - 2 < 0 ? 0 : h - 2));
  x0 = std::max(0, std::min(x0, w - 2 < 0 ? 0 : w - 2));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * (1 - fx) * x.at4(n, c, y0, x0) + (1 - fy) * fx * x.at4(n, c, y0, x1) +
         fy * (1 - fx) * x.at4(n, c, y1, x0) + fy * fx * x.at4(n, c, y1, x1);
}

double grad_check(const std::function<panoda::ad::Value()>& build,
                  const std::vector<panoda::ad::Value>& leaves, double h) {
  for (const auto& l : leaves) {
    l->zero_grad();
    l->requires_grad = true;
  }
  auto loss = build();
  panoda::ad::backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves)
    analytic.push_back(l->grad_allocated ? l->grad : Tensor::zeros(l->val.shape()));

  double max_rel = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& l = leaves[li];
    for (int64_t k = 0; k < l->val.size(); ++k) {
      const double orig = l->val[k];
      const double step = h * std::max(1.0, std::abs(orig));
      l->val[k] = orig + step;
      const double lp = build()->val[0];
      l->val[k] = orig - step;
      const double lm = build()->val[0];
      l->val[k] = orig;
      const double fd = (lp - lm) / (2.0 * step);
      const double a = analytic[li][k];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

void loop_confusion(const LabelGrid& pred, const LabelGrid& gt,
                    std::array<uint64_t, 19 * 19>& cm) {
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      const int32_t g = gt.at(y, x);
      if (g == 255) continue;
      cm[static_cast<size_t>(g) * 19 + pred.at(y, x)] += 1;
    }
}

}  // namespace oracles
