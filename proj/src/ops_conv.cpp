#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "panoda/ops.hpp"

namespace panoda::ops {

using ad::Node;
using ad::op_node;

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

struct ConvDims {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, bool pad_to_min) {
  if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: NCHW tensors required");
  ConvDims d{};
  d.n = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.cin)
    throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(d.cin) +
                                ", weight expects " + std::to_string(w.dim(1)));
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (pad_to_min) {
    if (d.ho < 1) d.ho = 1;
    if (d.wo < 1) d.wo = 1;
  }
  if (d.ho < 1 || d.wo < 1)
    throw std::invalid_argument("conv2d: output would be empty for input " + x.shape_str());
  return d;
}

// col is (cin*kh*kw) x (ho*wo), row-major.
void im2col(const ConvDims& d, const double* x, double* col) {
  const int64_t hw_out = int64_t(d.ho) * d.wo;
  for (int c = 0; c < d.cin; ++c) {
    for (int i = 0; i < d.kh; ++i) {
      for (int j = 0; j < d.kw; ++j) {
        double* row = col + ((int64_t(c) * d.kh + i) * d.kw + j) * hw_out;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride - d.pad + i;
          double* dst = row + int64_t(oy) * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill_n(dst, d.wo, 0.0);
            continue;
          }
          const double* src = x + (int64_t(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride - d.pad + j;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvDims& d, const double* col, double* dx) {
  const int64_t hw_out = int64_t(d.ho) * d.wo;
  for (int c = 0; c < d.cin; ++c) {
    for (int i = 0; i < d.kh; ++i) {
      for (int j = 0; j < d.kw; ++j) {
        const double* row = col + ((int64_t(c) * d.kh + i) * d.kw + j) * hw_out;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride - d.pad + i;
          if (iy < 0 || iy >= d.h) continue;
          double* dst = dx + (int64_t(c) * d.h + iy) * d.w;
          const double* src = row + int64_t(oy) * d.wo;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride - d.pad + j;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad,
             bool pad_to_min_output) {
  const ConvDims d = conv_dims(x->val, w->val, stride, pad, pad_to_min_output);
  if (b->val.size() != d.cout) throw std::invalid_argument("conv2d: bias size mismatch");

  const int64_t krows = int64_t(d.cin) * d.kh * d.kw;
  const int64_t hw_out = int64_t(d.ho) * d.wo;
  Tensor out({d.n, d.cout, d.ho, d.wo});
  std::vector<double> col(static_cast<size_t>(krows * hw_out));
  MapC W(w->val.data(), d.cout, krows);
  for (int n = 0; n < d.n; ++n) {
    im2col(d, x->val.data() + int64_t(n) * d.cin * d.h * d.w, col.data());
    MapC colm(col.data(), krows, hw_out);
    MapM y(out.data() + int64_t(n) * d.cout * hw_out, d.cout, hw_out);
    y.noalias() = W * colm;
    for (int c = 0; c < d.cout; ++c) y.row(c).array() += b->val[c];
  }

  return op_node(std::move(out), {x, w, b}, [d, krows, hw_out](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    MapC W(pw->val.data(), d.cout, krows);
    std::vector<double> col;
    std::vector<double> dcol;
    const bool need_col = self.needs(1);
    const bool need_dx = self.needs(0);
    if (need_col) col.resize(static_cast<size_t>(krows * hw_out));
    if (need_dx) dcol.resize(static_cast<size_t>(krows * hw_out));
    for (int n = 0; n < d.n; ++n) {
      MapC gy(self.grad.data() + int64_t(n) * d.cout * hw_out, d.cout, hw_out);
      if (self.needs(2)) {
        Tensor& gb = pb->ensure_grad();
        for (int c = 0; c < d.cout; ++c) gb[c] += gy.row(c).sum();
      }
      if (need_col) {
        im2col(d, px->val.data() + int64_t(n) * d.cin * d.h * d.w, col.data());
        MapC colm(col.data(), krows, hw_out);
        MapM gw(pw->ensure_grad().data(), d.cout, krows);
        gw.noalias() += gy * colm.transpose();
      }
      if (need_dx) {
        MapM dcolm(dcol.data(), krows, hw_out);
        dcolm.noalias() = W.transpose() * gy;
        col2im_add(d, dcol.data(),
                   px->ensure_grad().data() + int64_t(n) * d.cin * d.h * d.w);
      }
    }
  }, "conv2d");
}

Value group_norm(const Value& x, const Value& gamma, const Value& beta, int groups, double eps) {
  const Tensor& t = x->val;
  if (t.rank() != 4) throw std::invalid_argument("group_norm: NCHW tensor required");
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (groups < 1 || c % groups != 0)
    throw std::invalid_argument("group_norm: channel count " + std::to_string(c) +
                                " not divisible by groups " + std::to_string(groups));
  if (gamma->val.size() != c || beta->val.size() != c)
    throw std::invalid_argument("group_norm: affine parameter size mismatch");
  const int cg = c / groups;
  const int64_t m = int64_t(cg) * h * w;
  const int64_t hw = int64_t(h) * w;

  Tensor out(t.shape());
  std::vector<double> inv_std(static_cast<size_t>(n) * groups);
  std::vector<double> means(static_cast<size_t>(n) * groups);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const double* base = t.data() + (int64_t(i) * c + int64_t(g) * cg) * hw;
      double mu = 0.0;
      for (int64_t k = 0; k < m; ++k) mu += base[k];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (int64_t k = 0; k < m; ++k) {
        const double dxk = base[k] - mu;
        var += dxk * dxk;
      }
      var /= static_cast<double>(m);
      const double is = 1.0 / std::sqrt(var + eps);
      means[static_cast<size_t>(i) * groups + g] = mu;
      inv_std[static_cast<size_t>(i) * groups + g] = is;
      double* obase = out.data() + (int64_t(i) * c + int64_t(g) * cg) * hw;
      for (int cc = 0; cc < cg; ++cc) {
        const int ch = g * cg + cc;
        const double gm = gamma->val[ch], bt = beta->val[ch];
        for (int64_t k = 0; k < hw; ++k)
          obase[cc * hw + k] = gm * (base[cc * hw + k] - mu) * is + bt;
      }
    }
  }

  return op_node(std::move(out), {x, gamma, beta},
                 [n, c, h, w, groups, cg, m, hw, means, inv_std](Node& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pbt = self.parents[2];
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups; ++g) {
        const double mu = means[static_cast<size_t>(i) * groups + g];
        const double is = inv_std[static_cast<size_t>(i) * groups + g];
        const double* xb = px->val.data() + (int64_t(i) * c + int64_t(g) * cg) * hw;
        const double* gy = self.grad.data() + (int64_t(i) * c + int64_t(g) * cg) * hw;
        // dxhat, plus the two group means needed for the input gradient
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int cc = 0; cc < cg; ++cc) {
          const int ch = g * cg + cc;
          const double gm = pg->val[ch];
          for (int64_t k = 0; k < hw; ++k) {
            const double xhat = (xb[cc * hw + k] - mu) * is;
            const double dxh = gy[cc * hw + k] * gm;
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat;
          }
        }
        if (self.needs(1) || self.needs(2)) {
          for (int cc = 0; cc < cg; ++cc) {
            const int ch = g * cg + cc;
            double dgm = 0.0, dbt = 0.0;
            for (int64_t k = 0; k < hw; ++k) {
              const double xhat = (xb[cc * hw + k] - mu) * is;
              dgm += gy[cc * hw + k] * xhat;
              dbt += gy[cc * hw + k];
            }
            if (self.needs(1)) pg->ensure_grad()[ch] += dgm;
            if (self.needs(2)) pbt->ensure_grad()[ch] += dbt;
          }
        }
        if (self.needs(0)) {
          Tensor& gx = px->ensure_grad();
          double* dst = gx.data() + (int64_t(i) * c + int64_t(g) * cg) * hw;
          const double mean_dxhat = sum_dxhat / static_cast<double>(m);
          const double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(m);
          for (int cc = 0; cc < cg; ++cc) {
            const int ch = g * cg + cc;
            const double gm = pg->val[ch];
            for (int64_t k = 0; k < hw; ++k) {
              const double xhat = (xb[cc * hw + k] - mu) * is;
              const double dxh = gy[cc * hw + k] * gm;
              dst[cc * hw + k] += is * (dxh - mean_dxhat - xhat * mean_dxhat_xhat);
            }
          }
        }
      }
    }
  }, "group_norm");
}

namespace {
struct LerpIdx {
  int i0, i1;
  double f;
};
inline LerpIdx lerp_index(int out, int in_size, int out_size) {
  if (out_size <= 1 || in_size <= 1) return {0, 0, 0.0};
  const double s = static_cast<double>(out) * (in_size - 1) / (out_size - 1);
  int i0 = static_cast<int>(s);
  if (i0 >= in_size - 1) i0 = in_size - 2;
  return {i0, i0 + 1, s - i0};
}
}  // namespace

Value upsample_bilinear(const Value& x, int out_h, int out_w) {
  const Tensor& t = x->val;
  if (t.rank() != 4) throw std::invalid_argument("upsample_bilinear: NCHW tensor required");
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (out_h < h || out_w < w)
    throw std::invalid_argument("upsample_bilinear: downscaling request (" + t.shape_str() +
                                " -> " + std::to_string(out_h) + "x" + std::to_string(out_w) + ")");
  Tensor out({n, c, out_h, out_w});
  for (int oy = 0; oy < out_h; ++oy) {
    const LerpIdx ly = lerp_index(oy, h, out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      const LerpIdx lx = lerp_index(ox, w, out_w);
      const double w00 = (1 - ly.f) * (1 - lx.f), w01 = (1 - ly.f) * lx.f;
      const double w10 = ly.f * (1 - lx.f), w11 = ly.f * lx.f;
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          out.at4(i, ch, oy, ox) = w00 * t.at4(i, ch, ly.i0, lx.i0) +
                                   w01 * t.at4(i, ch, ly.i0, lx.i1) +
                                   w10 * t.at4(i, ch, ly.i1, lx.i0) +
                                   w11 * t.at4(i, ch, ly.i1, lx.i1);
    }
  }
  return op_node(std::move(out), {x}, [n, c, h, w, out_h, out_w](Node& self) {
    auto& px = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = px->ensure_grad();
    for (int oy = 0; oy < out_h; ++oy) {
      const LerpIdx ly = lerp_index(oy, h, out_h);
      for (int ox = 0; ox < out_w; ++ox) {
        const LerpIdx lx = lerp_index(ox, w, out_w);
        const double w00 = (1 - ly.f) * (1 - lx.f), w01 = (1 - ly.f) * lx.f;
        const double w10 = ly.f * (1 - lx.f), w11 = ly.f * lx.f;
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            const double gv = self.grad.at4(i, ch, oy, ox);
            g.at4(i, ch, ly.i0, lx.i0) += w00 * gv;
            g.at4(i, ch, ly.i0, lx.i1) += w01 * gv;
            g.at4(i, ch, ly.i1, lx.i0) += w10 * gv;
            g.at4(i, ch, ly.i1, lx.i1) += w11 * gv;
          }
      }
    }
  }, "upsample_bilinear");
}

Tensor bilinear_resize(const Tensor& t, int out_h, int out_w) {
  if (t.rank() != 4) throw std::invalid_argument("bilinear_resize: NCHW tensor required");
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Tensor out({n, c, out_h, out_w});
  for (int oy = 0; oy < out_h; ++oy) {
    const LerpIdx ly = lerp_index(oy, h, out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      const LerpIdx lx = lerp_index(ox, w, out_w);
      const double w00 = (1 - ly.f) * (1 - lx.f), w01 = (1 - ly.f) * lx.f;
      const double w10 = ly.f * (1 - lx.f), w11 = ly.f * lx.f;
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          out.at4(i, ch, oy, ox) = w00 * t.at4(i, ch, ly.i0, lx.i0) +
                                   w01 * t.at4(i, ch, ly.i0, lx.i1) +
                                   w10 * t.at4(i, ch, ly.i1, lx.i0) +
                                   w11 * t.at4(i, ch, ly.i1, lx.i1);
    }
  }
  return out;
}

LabelGrid nearest_resize(const LabelGrid& g, int out_h, int out_w) {
  LabelGrid out(out_h, out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    int sy = (out_h <= 1) ? 0 : static_cast<int>(std::lround(double(oy) * (g.h - 1) / (out_h - 1)));
    for (int ox = 0; ox < out_w; ++ox) {
      int sx = (out_w <= 1) ? 0 : static_cast<int>(std::lround(double(ox) * (g.w - 1) / (out_w - 1)));
      out.at(oy, ox) = g.at(sy, sx);
    }
  }
  return out;
}

void softmax_channels(const Tensor& logits, Tensor& probs) {
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (!probs.same_shape(logits)) probs = Tensor(logits.shape());
  const int64_t hw = int64_t(h) * w;
  for (int i = 0; i < n; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      const double* src = logits.data() + int64_t(i) * c * hw + p;
      double* dst = probs.data() + int64_t(i) * c * hw + p;
      double mx = src[0];
      for (int ch = 1; ch < c; ++ch) mx = std::max(mx, src[ch * hw]);
      double denom = 0.0;
      for (int ch = 0; ch < c; ++ch) denom += std::exp(src[ch * hw] - mx);
      const double inv = 1.0 / denom;
      for (int ch = 0; ch < c; ++ch) dst[ch * hw] = std::exp(src[ch * hw] - mx) * inv;
    }
  }
}

LabelGrid argmax_channels(const Tensor& logits, int n) {
  const int c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  LabelGrid out(h, w);
  const int64_t hw = int64_t(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* src = logits.data() + int64_t(n) * c * hw + int64_t(y) * w + x;
      int best = 0;
      double bv = src[0];
      for (int ch = 1; ch < c; ++ch) {
        const double v = src[ch * hw];
        if (v > bv) {
          bv = v;
          best = ch;
        }
      }
      out.at(y, x) = best;
    }
  }
  return out;
}

}  // namespace panoda::ops
