#include "panoda/segnet.hpp"

#include <stdexcept>

namespace panoda::segnet {

Mode mode_from_string(const std::string& s) {
  if (s == "danet_like") return Mode::danet_like;
  if (s == "fanet_like") return Mode::fanet_like;
  throw std::invalid_argument("unknown segnet mode '" + s + "' (danet_like|fanet_like)");
}

std::string mode_to_string(Mode m) {
  return m == Mode::danet_like ? "danet_like" : "fanet_like";
}

std::pair<Value, Value> fanet_multilevel_wiring(const BackboneOutput& b, Mode mode) {
  if (mode != Mode::fanet_like)
    throw std::logic_error("fanet_multilevel_wiring: only valid in fanet_like mode");
  const int h4 = b.r4->val.dim(2), w4 = b.r4->val.dim(3);
  const int h8 = b.r8->val.dim(2), w8 = b.r8->val.dim(3);
  auto b1_input = ops::concat_c(ops::upsample_bilinear(b.r16, h4, w4), b.r4);
  auto c1_input = ops::concat_c(ops::upsample_bilinear(b.r16, h8, w8), b.r8);
  return {b1_input, c1_input};
}

SegNet::SegNet(const SegNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  const auto& ch = cfg.channels;
  const int g = cfg.gn_groups;
  stem_ = nn::ConvBlock(params_, "stem", rng, 3, ch[0], 3, 2, 1, g);
  enc2a_ = nn::ConvBlock(params_, "enc2a", rng, ch[0], ch[1], 3, 2, 1, g);
  enc2b_ = nn::ConvBlock(params_, "enc2b", rng, ch[1], ch[1], 3, 1, 1, g);
  enc3a_ = nn::ConvBlock(params_, "enc3a", rng, ch[1], ch[2], 3, 2, 1, g);
  enc3b_ = nn::ConvBlock(params_, "enc3b", rng, ch[2], ch[2], 3, 1, 1, g);
  enc4a_ = nn::ConvBlock(params_, "enc4a", rng, ch[2], ch[3], 3, 2, 1, g);
  enc4b_ = nn::ConvBlock(params_, "enc4b", rng, ch[3], ch[3], 3, 1, 1, g);
  neck_ = nn::ConvBlock(params_, "neck", rng, ch[3], ch[3], 3, 1, 1, g);

  pos_ = attention::PositionAttention(params_, "att.pos");
  chan_ = attention::ChannelAttention(params_, "att.chan");
  dual_fuse_ = nn::Conv2d(params_, "att.fuse", rng, 2 * ch[3], ch[3], 1, 1, 0);
  dual_fuse_.averaging_init();

  const int hid = cfg.head_hidden;
  if (cfg.mode == Mode::fanet_like) {
    fanet_b1_proj_ = nn::ConvBlock(params_, "fanet.b1proj", rng, ch[3] + ch[1], ch[3], 3, 1, 1, g);
    fanet_c1_proj_ = nn::ConvBlock(params_, "fanet.c1proj", rng, ch[3] + ch[2], ch[3], 3, 1, 1, g);
  }
  c1_hidden_ = nn::ConvBlock(params_, "head.c1h", rng, ch[3], hid, 3, 1, 1, g);
  c1_out_ = nn::Conv2d(params_, "head.c1", rng, hid, cfg.num_classes, 1, 1, 0);
  c2_hidden_ = nn::ConvBlock(params_, "head.c2h", rng, ch[3], hid, 3, 1, 1, g);
  c2_out_ = nn::Conv2d(params_, "head.c2", rng, hid, cfg.num_classes, 1, 1, 0);
  b1_hidden_ = nn::ConvBlock(params_, "head.b1h", rng, ch[3], hid, 3, 1, 1, g);
  b1_out_ = nn::Conv2d(params_, "head.b1", rng, hid, 1, 1, 1, 0);
}

SegNetForward SegNet::forward(const Tensor& images) {
  return forward(ad::make_leaf(images));
}

SegNetForward SegNet::forward(const Value& images) {
  const Tensor& t = images->val;
  if (t.rank() != 4 || t.dim(1) != 3)
    throw std::invalid_argument("SegNet::forward: [N,3,H,W] input required, got " + t.shape_str());
  const int h = t.dim(2), w = t.dim(3);
  if (h % 16 != 0 || w % 16 != 0)
    throw std::invalid_argument("SegNet::forward: spatial size " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by 16");

  SegNetForward out;
  auto r2 = stem_.forward(images);
  auto r4 = enc2b_.forward(enc2a_.forward(r2));
  auto r8 = enc3b_.forward(enc3a_.forward(r4));
  auto r16 = enc4b_.forward(enc4a_.forward(r8));
  out.feats = {r4, r8, r16};
  out.f16 = neck_.forward(r16);

  Value c1_low, c2_low, b1_low;
  if (cfg_.mode == Mode::danet_like) {
    auto pa = pos_.forward(out.f16);
    auto ca = chan_.forward(out.f16);
    out.pos_weights = std::move(pa.weights);
    out.dual_feat = dual_fuse_.forward(ops::concat_c(pa.out, ca.out));
    c1_low = c1_out_.forward(c1_hidden_.forward(pa.out));
    c2_low = c2_out_.forward(c2_hidden_.forward(ca.out));
    b1_low = b1_out_.forward(b1_hidden_.forward(out.f16));
    out.region_feat = out.f16;
    out.region_h = out.f16->val.dim(2);
    out.region_w = out.f16->val.dim(3);
    out.b1_region = b1_low->val;
    out.c1_region = c1_low->val;
  } else {
    auto [b1_input, c1_input] = fanet_multilevel_wiring(out.feats, cfg_.mode);
    auto b1_feat = fanet_b1_proj_.forward(b1_input);  // r4
    auto c1_feat = fanet_c1_proj_.forward(c1_input);  // r8
    auto pa = pos_.forward(c1_feat);
    out.pos_weights = std::move(pa.weights);
    c1_low = c1_out_.forward(c1_hidden_.forward(pa.out));
    auto ca = chan_.forward(out.f16);
    c2_low = c2_out_.forward(c2_hidden_.forward(ca.out));
    b1_low = b1_out_.forward(b1_hidden_.forward(b1_feat));
    // dual-attention feature for the attentional alignment input, at r16
    auto pa16 = pos_.forward(out.f16);
    out.dual_feat = dual_fuse_.forward(ops::concat_c(pa16.out, ca.out));
    // region stage runs at r8; b1 logits are nearest-sampled down from r4
    out.region_feat = pa.out;
    out.region_h = pa.out->val.dim(2);
    out.region_w = pa.out->val.dim(3);
    const Tensor& b1v = b1_low->val;
    Tensor b1r({1 * b1v.dim(0), 1, out.region_h, out.region_w});
    for (int n = 0; n < b1v.dim(0); ++n)
      for (int y = 0; y < out.region_h; ++y)
        for (int x = 0; x < out.region_w; ++x)
          b1r.at4(n, 0, y, x) = b1v.at4(n, 0, 2 * y, 2 * x);
    out.b1_region = std::move(b1r);
    out.c1_region = c1_low->val;
  }

  out.heads.c1 = ops::upsample_bilinear(c1_low, h, w);
  out.heads.c2 = ops::upsample_bilinear(c2_low, h, w);
  out.heads.b1 = ops::upsample_bilinear(b1_low, h, w);
  return out;
}

std::vector<std::string> SegNet::c1_param_names() const {
  std::vector<std::string> names{"att.pos.gamma", "head.c1h.conv.w", "head.c1h.conv.b",
                                 "head.c1h.gn.g", "head.c1h.gn.b", "head.c1.w", "head.c1.b"};
  if (cfg_.mode == Mode::fanet_like)
    for (const char* s : {"fanet.c1proj.conv.w", "fanet.c1proj.conv.b", "fanet.c1proj.gn.g",
                          "fanet.c1proj.gn.b"})
      names.emplace_back(s);
  return names;
}

std::vector<std::string> SegNet::c2_param_names() const {
  return {"att.chan.gamma", "head.c2h.conv.w", "head.c2h.conv.b",
          "head.c2h.gn.g", "head.c2h.gn.b",    "head.c2.w",
          "head.c2.b"};
}

}  // namespace panoda::segnet
