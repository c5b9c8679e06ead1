#pragma once

#include <memory>
#include <string>
#include <vector>

#include "panoda/autodiff.hpp"
#include "panoda/ops.hpp"
#include "panoda/rng.hpp"

namespace panoda::nn {

using ad::Value;

// Flat registry of named parameters; the checkpoint format serializes it
// directly. Names are unique and insertion order is preserved.
class ParamStore {
 public:
  Value add(const std::string& name, Tensor init);
  const std::vector<Value>& all() const { return params_; }
  Value find(const std::string& name) const;
  void set_requires_grad(bool on);
  void zero_grad();
  int64_t parameter_count() const;

 private:
  std::vector<Value> params_;
};

struct Conv2d {
  Value w, b;
  int stride = 1, pad = 0;
  bool pad_to_min = false;

  Conv2d() = default;
  // He-normal weight init (gain for the activation that follows); zero bias.
  Conv2d(ParamStore& ps, const std::string& prefix, Rng& rng, int cin, int cout, int k, int stride,
         int pad, double init_gain = 2.0);

  Value forward(const Value& x) const { return ops::conv2d(x, w, b, stride, pad, pad_to_min); }
  void zero_init();
  // 1x1 fusion conv over a [a;b] channel concat that starts as 0.5*(a+b).
  void averaging_init();
};

struct GroupNorm {
  Value gamma, beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamStore& ps, const std::string& prefix, int channels, int wanted_groups);

  Value forward(const Value& x) const { return ops::group_norm(x, gamma, beta, groups); }

  // Largest divisor of `channels` that is <= `wanted`.
  static int pick_groups(int channels, int wanted);
};

// conv -> group norm -> relu
struct ConvBlock {
  Conv2d conv;
  GroupNorm norm;

  ConvBlock() = default;
  ConvBlock(ParamStore& ps, const std::string& prefix, Rng& rng, int cin, int cout, int k,
            int stride, int pad, int gn_groups);
  Value forward(const Value& x) const { return ops::relu(norm.forward(conv.forward(x))); }
};

}  // namespace panoda::nn
