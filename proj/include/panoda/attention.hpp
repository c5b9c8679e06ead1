#pragma once

#include <utility>
#include <vector>

#include "panoda/nn.hpp"

namespace panoda::attention {

using ad::Value;

// Attended output plus the row-stochastic weight matrix (a value snapshot,
// kept for querying and visualization; gradients flow through the graph, not
// through this copy).
struct AttentionResult {
  Value out;       // F + gamma * attended, same shape as the input
  Tensor weights;  // position: [N, h*w, h*w]; channel: [N, c, c]
};

// Pixel-similarity attention: softmax over keys of F'·F'^T, aggregation of
// the reshaped feature rows, residual with a learnable gamma starting at 0.
class PositionAttention {
 public:
  PositionAttention() = default;
  PositionAttention(nn::ParamStore& ps, const std::string& prefix);
  AttentionResult forward(const Value& f) const;
  Value gamma;
};

class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(nn::ParamStore& ps, const std::string& prefix);
  AttentionResult forward(const Value& f) const;
  Value gamma;
};

// Concatenates the two attended maps and fuses back to c channels with a 1x1
// conv initialized as averaging, so the whole block starts as identity.
class DualAttention {
 public:
  DualAttention() = default;
  DualAttention(nn::ParamStore& ps, const std::string& prefix, Rng& rng, int channels);
  struct Result {
    Value fused;
    Value pos_out, chan_out;
    Tensor pos_weights, chan_weights;
  };
  Result forward(const Value& f) const;

  PositionAttention pos;
  ChannelAttention chan;
  nn::Conv2d fuse;
};

// One pixel's attention row reshaped to h x w. Throws on out-of-bounds.
FloatGrid query_attention_map(const Tensor& pos_weights, int n, int y, int x, int h, int w);

// Region decision map built from boundary + semantic logits; prototypes and
// representatives come from the feature map.
struct RegionDecisionMap {
  int h = 0, w = 0;
  LabelGrid region_id;                               // 0..K-1, total partition
  int num_regions = 0;
  std::vector<int32_t> region_class;                 // majority semantic id
  Tensor prototypes;                                 // [K, C] mean features
  std::vector<std::pair<int, int>> representatives;  // (y, x) closest to prototype
};

RegionDecisionMap region_construction(const Tensor& b1_logits,  // [1,1,h,w]
                                      const Tensor& c1_logits,  // [1,K,h,w]
                                      const Tensor& features);  // [1,C,h,w]

// Intra-region prototype broadcast followed by inter-region prototype
// attention; output keeps the feature shape. Differentiable in F for a fixed
// region map.
Value region_interaction(const Value& f, const RegionDecisionMap& rdm);

}  // namespace panoda::attention
