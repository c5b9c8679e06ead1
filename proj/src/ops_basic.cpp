#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "panoda/ops.hpp"

namespace panoda::ops {

using ad::Node;
using ad::op_node;

namespace {
void check_same_shape(const Value& a, const Value& b, const char* who) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + a->val.shape_str() +
                                " vs " + b->val.shape_str());
}
}  // namespace

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->val;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] += b->val[i];
  return op_node(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const int64_t n = self.grad.size();
    if (self.needs(0)) {
      Tensor& g = pa->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (self.needs(1)) {
      Tensor& g = pb->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
  }, "add");
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->val;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] -= b->val[i];
  return op_node(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const int64_t n = self.grad.size();
    if (self.needs(0)) {
      Tensor& g = pa->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (self.needs(1)) {
      Tensor& g = pb->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] -= self.grad[i];
    }
  }, "sub");
}

Value scale(const Value& a, double k) {
  Tensor out = a->val;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] *= k;
  return op_node(std::move(out), {a}, [k](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    const int64_t n = self.grad.size();
    for (int64_t i = 0; i < n; ++i) g[i] += k * self.grad[i];
  }, "scale");
}

Value scale_by(const Value& a, const Value& gamma) {
  if (gamma->val.size() != 1) throw std::invalid_argument("scale_by: gamma must be a scalar");
  const double k = gamma->val[0];
  Tensor out = a->val;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] *= k;
  return op_node(std::move(out), {a, gamma}, [k](Node& self) {
    auto& pa = self.parents[0];
    auto& pg = self.parents[1];
    const int64_t n = self.grad.size();
    if (self.needs(0)) {
      Tensor& g = pa->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] += k * self.grad[i];
    }
    if (self.needs(1)) {
      Tensor& g = pg->ensure_grad();
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += self.grad[i] * pa->val[i];
      g[0] += acc;
    }
  }, "scale_by");
}

Value add_scalars(const std::vector<Value>& terms) {
  if (terms.empty()) throw std::invalid_argument("add_scalars: empty term list");
  double total = 0.0;
  for (const auto& t : terms) {
    if (t->val.size() != 1) throw std::invalid_argument("add_scalars: non-scalar term");
    total += t->val[0];
  }
  return op_node(Tensor::scalar(total), terms, [](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      if (!self.needs(i)) continue;
      self.parents[i]->ensure_grad()[0] += self.grad[0];
    }
  }, "add_scalars");
}

Value sum(const Value& a) {
  double acc = 0.0;
  const int64_t n = a->val.size();
  for (int64_t i = 0; i < n; ++i) acc += a->val[i];
  return op_node(Tensor::scalar(acc), {a}, [](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) g[i] += self.grad[0];
  }, "sum");
}

Value mean(const Value& a) {
  const int64_t n = a->val.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += a->val[i];
  const double inv = 1.0 / static_cast<double>(n);
  return op_node(Tensor::scalar(acc * inv), {a}, [inv](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) g[i] += self.grad[0] * inv;
  }, "mean");
}

Value leaky_relu(const Value& a, double slope) {
  Tensor out = a->val;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i)
    if (out[i] < 0.0) out[i] *= slope;
  return op_node(std::move(out), {a}, [slope](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * (pa->val[i] >= 0.0 ? 1.0 : slope);
  }, "leaky_relu");
}

Value relu(const Value& a) { return leaky_relu(a, 0.0); }

Value sigmoid(const Value& a) {
  Tensor out = a->val;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  auto result = op_node(std::move(out), {a}, [](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) {
      const double s = self.val[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  }, "sigmoid");
  return result;
}

Value reshape(const Value& a, std::vector<int> shape) {
  if (Tensor::count(shape) != a->val.size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out;
  {
    Tensor t = a->val;  // copy data, new shape
    out = Tensor::from(std::move(shape), std::vector<double>(t.data(), t.data() + t.size()));
  }
  return op_node(std::move(out), {a}, [](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
  }, "reshape");
}

Value transpose12(const Value& a) {
  if (a->val.rank() != 3) throw std::invalid_argument("transpose12: rank-3 tensor required");
  const int n = a->val.dim(0), r = a->val.dim(1), c = a->val.dim(2);
  Tensor out({n, c, r});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < c; ++x) out.at3(i, x, y) = a->val.at3(i, y, x);
  return op_node(std::move(out), {a}, [n, r, c](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < c; ++x) g.at3(i, y, x) += self.grad.at3(i, x, y);
  }, "transpose12");
}

Value concat_c(const Value& a, const Value& b) {
  const Tensor& ta = a->val;
  const Tensor& tb = b->val;
  if (ta.rank() != 4 || tb.rank() != 4) throw std::invalid_argument("concat_c: NCHW required");
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3))
    throw std::invalid_argument("concat_c: non-channel dims differ");
  const int n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1), h = ta.dim(2), w = ta.dim(3);
  Tensor out({n, ca + cb, h, w});
  const int64_t hw = int64_t(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy_n(ta.data() + i * ca * hw, ca * hw, out.data() + int64_t(i) * (ca + cb) * hw);
    std::copy_n(tb.data() + i * cb * hw, cb * hw,
                out.data() + int64_t(i) * (ca + cb) * hw + ca * hw);
  }
  return op_node(std::move(out), {a, b}, [n, ca, cb, hw](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (int i = 0; i < n; ++i) {
      const double* src = self.grad.data() + int64_t(i) * (ca + cb) * hw;
      if (self.needs(0)) {
        Tensor& g = pa->ensure_grad();
        double* dst = g.data() + int64_t(i) * ca * hw;
        for (int64_t k = 0; k < ca * hw; ++k) dst[k] += src[k];
      }
      if (self.needs(1)) {
        Tensor& g = pb->ensure_grad();
        double* dst = g.data() + int64_t(i) * cb * hw;
        for (int64_t k = 0; k < cb * hw; ++k) dst[k] += src[ca * hw + k];
      }
    }
  }, "concat_c");
}

Value slice_n(const Value& a, int n) {
  const Tensor& t = a->val;
  if (t.rank() < 1 || n < 0 || n >= t.dim(0)) throw std::invalid_argument("slice_n: bad index");
  std::vector<int> shape = t.shape();
  const int64_t stride = t.size() / t.dim(0);
  shape[0] = 1;
  Tensor out(shape);
  std::copy_n(t.data() + n * stride, stride, out.data());
  return op_node(std::move(out), {a}, [n, stride](Node& self) {
    auto& pa = self.parents[0];
    if (!self.needs(0)) return;
    Tensor& g = pa->ensure_grad();
    double* dst = g.data() + n * stride;
    for (int64_t i = 0; i < stride; ++i) dst[i] += self.grad[i];
  }, "slice_n");
}

Value stack_n(const std::vector<Value>& items) {
  if (items.empty()) throw std::invalid_argument("stack_n: empty list");
  std::vector<int> shape = items[0]->val.shape();
  const int64_t stride = items[0]->val.size() / shape[0];
  int total_n = 0;
  for (const auto& it : items) {
    if (it->val.rank() != static_cast<int>(shape.size()))
      throw std::invalid_argument("stack_n: rank mismatch");
    for (size_t d = 1; d < shape.size(); ++d)
      if (it->val.dim(static_cast<int>(d)) != shape[d])
        throw std::invalid_argument("stack_n: trailing shape mismatch");
    total_n += it->val.dim(0);
  }
  std::vector<int> out_shape = shape;
  out_shape[0] = total_n;
  Tensor out(out_shape);
  int64_t off = 0;
  for (const auto& it : items) {
    std::copy_n(it->val.data(), it->val.size(), out.data() + off);
    off += it->val.size();
  }
  return op_node(std::move(out), items, [stride](Node& self) {
    int64_t off = 0;
    (void)stride;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      auto& p = self.parents[pi];
      const int64_t sz = p->val.size();
      if (self.needs(pi)) {
        Tensor& g = p->ensure_grad();
        for (int64_t i = 0; i < sz; ++i) g[i] += self.grad[off + i];
      }
      off += sz;
    }
  }, "stack_n");
}

}  // namespace panoda::ops
