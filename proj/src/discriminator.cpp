#include "panoda/discriminator.hpp"

#include <stdexcept>

namespace panoda::damods {

PatchDiscriminator::PatchDiscriminator(Rng& rng, int in_channels, int base,
                                       const std::string& prefix)
    : in_channels_(in_channels) {
  c1_ = nn::Conv2d(params_, prefix + ".c1", rng, in_channels, base, 4, 2, 1);
  c2_ = nn::Conv2d(params_, prefix + ".c2", rng, base, 2 * base, 4, 2, 1);
  c3_ = nn::Conv2d(params_, prefix + ".c3", rng, 2 * base, 4 * base, 4, 2, 1);
  c4_ = nn::Conv2d(params_, prefix + ".c4", rng, 4 * base, 8 * base, 4, 2, 1);
  c5_ = nn::Conv2d(params_, prefix + ".c5", rng, 8 * base, 1, 4, 2, 1);
  for (auto* c : {&c1_, &c2_, &c3_, &c4_, &c5_}) c->pad_to_min = true;
}

Value PatchDiscriminator::forward(const Value& x) const {
  if (x->val.rank() != 4 || x->val.dim(1) != in_channels_)
    throw std::invalid_argument("PatchDiscriminator: expected " + std::to_string(in_channels_) +
                                " input channels, got " + x->val.shape_str());
  auto h = ops::leaky_relu(c1_.forward(x), leaky_);
  h = ops::leaky_relu(c2_.forward(h), leaky_);
  h = ops::leaky_relu(c3_.forward(h), leaky_);
  h = ops::leaky_relu(c4_.forward(h), leaky_);
  return c5_.forward(h);  // raw logits, no sigmoid
}

}  // namespace panoda::damods
