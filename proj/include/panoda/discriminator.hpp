#pragma once

#include "panoda/nn.hpp"

namespace panoda::damods {

using ad::Value;

// AdaptSegNet-style patch discriminator: five 4x4 stride-2 convs
// (base, 2b, 4b, 8b, 1 channels), leaky ReLU 0.2, no normalization. Output is
// raw logits at 1/32 of the input, clamped to at least 1x1 on tiny maps.
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(Rng& rng, int in_channels, int base = 64, const std::string& prefix = "d");

  Value forward(const Value& x) const;

  int in_channels() const { return in_channels_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  int in_channels_ = 0;
  double leaky_ = 0.2;
  nn::ParamStore params_;
  nn::Conv2d c1_, c2_, c3_, c4_, c5_;
};

}  // namespace panoda::damods
