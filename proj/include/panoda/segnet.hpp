#pragma once

#include <array>
#include <string>

#include "panoda/attention.hpp"
#include "panoda/nn.hpp"

namespace panoda::segnet {

using ad::Value;

enum class Mode { danet_like, fanet_like };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct SegNetConfig {
  Mode mode = Mode::danet_like;
  std::array<int, 4> channels{16, 32, 48, 64};  // stages at r2, r4, r8, r16
  int head_hidden = 32;
  int gn_groups = 8;
  int num_classes = kNumClasses;
};

// Multi-level backbone features keyed by downsampling rate.
struct BackboneOutput {
  Value r4, r8, r16;
};

// Full-resolution head logits. c1 rides the position-attended path and c2 the
// channel-attended path, so the two predictions can disagree.
struct HeadOutputs {
  Value b1;  // [N,1,H,W]
  Value c1;  // [N,19,H,W]
  Value c2;  // [N,19,H,W]
};

struct SegNetForward {
  BackboneOutput feats;
  HeadOutputs heads;
  Value f16;          // decoder feature at r16 (feature-space alignment input)
  Value dual_feat;    // fused dual-attention feature (attentional alignment input)
  Value region_feat;  // feature map the region stage operates on
  Tensor b1_region, c1_region;  // logit snapshots at the region resolution
  Tensor pos_weights;           // position attention rows for visualization
  int region_h = 0, region_w = 0;
};

// b1 input = concat(upsample(F16 -> r4), F4); c1 input = concat(upsample(F16 -> r8), F8).
// Rejects danet_like mode.
std::pair<Value, Value> fanet_multilevel_wiring(const BackboneOutput& b, Mode mode);

class SegNet {
 public:
  SegNet(const SegNetConfig& cfg, Rng& rng);

  // images: [N,3,H,W] in [0,1]; H and W must be divisible by 16.
  SegNetForward forward(const Value& images);
  SegNetForward forward(const Tensor& images);

  const SegNetConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Parameter names of the c1-only and c2-only paths (disjointness audit).
  std::vector<std::string> c1_param_names() const;
  std::vector<std::string> c2_param_names() const;

 private:
  SegNetConfig cfg_;
  nn::ParamStore params_;
  nn::ConvBlock stem_, enc2a_, enc2b_, enc3a_, enc3b_, enc4a_, enc4b_, neck_;
  attention::PositionAttention pos_;
  attention::ChannelAttention chan_;
  nn::Conv2d dual_fuse_;
  nn::ConvBlock c1_hidden_, c2_hidden_, b1_hidden_;
  nn::Conv2d c1_out_, c2_out_, b1_out_;
  // fanet mode re-projects the concatenated multi-level inputs
  nn::ConvBlock fanet_b1_proj_, fanet_c1_proj_;
};

}  // namespace panoda::segnet
