#include "panoda/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace panoda::nn {

Value ParamStore::add(const std::string& name, Tensor init) {
  for (const auto& p : params_)
    if (p->name == name) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  Value v = ad::make_param(std::move(init), name);
  params_.push_back(v);
  return v;
}

Value ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p;
  throw std::invalid_argument("ParamStore: unknown parameter " + name);
}

void ParamStore::set_requires_grad(bool on) {
  for (auto& p : params_) p->requires_grad = on;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

int64_t ParamStore::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->val.size();
  return n;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& prefix, Rng& rng, int cin, int cout, int k,
               int stride_, int pad_, double init_gain)
    : stride(stride_), pad(pad_) {
  Tensor wt({cout, cin, k, k});
  const double std = std::sqrt(init_gain / (double(cin) * k * k));
  for (int64_t i = 0; i < wt.size(); ++i) wt[i] = rng.normal(0.0, std);
  w = ps.add(prefix + ".w", std::move(wt));
  b = ps.add(prefix + ".b", Tensor::zeros({cout}));
}

void Conv2d::zero_init() {
  w->val.fill(0.0);
  b->val.fill(0.0);
}

void Conv2d::averaging_init() {
  const int cout = w->val.dim(0), cin = w->val.dim(1), k = w->val.dim(2);
  if (cin != 2 * cout || k != 1)
    throw std::logic_error("averaging_init requires a 1x1 conv with cin == 2*cout");
  w->val.fill(0.0);
  b->val.fill(0.0);
  for (int o = 0; o < cout; ++o) {
    w->val.at4(o, o, 0, 0) = 0.5;
    w->val.at4(o, o + cout, 0, 0) = 0.5;
  }
}

int GroupNorm::pick_groups(int channels, int wanted) {
  for (int g = std::min(wanted, channels); g >= 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

GroupNorm::GroupNorm(ParamStore& ps, const std::string& prefix, int channels, int wanted_groups)
    : groups(pick_groups(channels, wanted_groups)) {
  gamma = ps.add(prefix + ".g", Tensor::full({channels}, 1.0));
  beta = ps.add(prefix + ".b", Tensor::zeros({channels}));
}

ConvBlock::ConvBlock(ParamStore& ps, const std::string& prefix, Rng& rng, int cin, int cout, int k,
                     int stride, int pad, int gn_groups)
    : conv(ps, prefix + ".conv", rng, cin, cout, k, stride, pad),
      norm(ps, prefix + ".gn", cout, gn_groups) {}

}  // namespace panoda::nn
