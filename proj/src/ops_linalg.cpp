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
}  // namespace

Value bmm(const Value& a, const Value& b) {
  const Tensor& ta = a->val;
  const Tensor& tb = b->val;
  if (ta.rank() != 3 || tb.rank() != 3) throw std::invalid_argument("bmm: rank-3 inputs required");
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(1))
    throw std::invalid_argument("bmm: incompatible shapes " + ta.shape_str() + " x " +
                                tb.shape_str());
  const int n = ta.dim(0), m = ta.dim(1), k = ta.dim(2), p = tb.dim(2);
  Tensor out({n, m, p});
  for (int i = 0; i < n; ++i) {
    MapC A(ta.data() + int64_t(i) * m * k, m, k);
    MapC B(tb.data() + int64_t(i) * k * p, k, p);
    MapM C(out.data() + int64_t(i) * m * p, m, p);
    C.noalias() = A * B;
  }
  return op_node(std::move(out), {a, b}, [n, m, k, p](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (int i = 0; i < n; ++i) {
      MapC G(self.grad.data() + int64_t(i) * m * p, m, p);
      if (self.needs(0)) {
        MapC B(pb->val.data() + int64_t(i) * k * p, k, p);
        MapM GA(pa->ensure_grad().data() + int64_t(i) * m * k, m, k);
        GA.noalias() += G * B.transpose();
      }
      if (self.needs(1)) {
        MapC A(pa->val.data() + int64_t(i) * m * k, m, k);
        MapM GB(pb->ensure_grad().data() + int64_t(i) * k * p, k, p);
        GB.noalias() += A.transpose() * G;
      }
    }
  }, "bmm");
}

Value softmax_lastdim(const Value& a) {
  const Tensor& t = a->val;
  if (t.rank() != 3) throw std::invalid_argument("softmax_lastdim: rank-3 tensor required");
  const int n = t.dim(0), r = t.dim(1), c = t.dim(2);
  Tensor out(t.shape());
  for (int i = 0; i < n; ++i) {
    for (int y = 0; y < r; ++y) {
      const double* row = t.data() + (int64_t(i) * r + y) * c;
      double* orow = out.data() + (int64_t(i) * r + y) * c;
      double mx = row[0];
      for (int x = 1; x < c; ++x) mx = std::max(mx, row[x]);
      double denom = 0.0;
      for (int x = 0; x < c; ++x) {
        orow[x] = std::exp(row[x] - mx);
        denom += orow[x];
      }
      const double inv = 1.0 / denom;
      for (int x = 0; x < c; ++x) orow[x] *= inv;
    }
  }
  return op_node(std::move(out), {a}, [n, r, c](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < n; ++i) {
      for (int y = 0; y < r; ++y) {
        const int64_t base = (int64_t(i) * r + y) * c;
        const double* sy = self.val.data() + base;
        const double* gy = self.grad.data() + base;
        double dot = 0.0;
        for (int x = 0; x < c; ++x) dot += gy[x] * sy[x];
        double* dst = g.data() + base;
        for (int x = 0; x < c; ++x) dst[x] += sy[x] * (gy[x] - dot);
      }
    }
  }, "softmax_lastdim");
}

}  // namespace panoda::ops
