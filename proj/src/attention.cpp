#include "panoda/attention.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace panoda::attention {

namespace {
void check_nchw(const Tensor& t, const char* who) {
  if (t.rank() != 4) throw std::invalid_argument(std::string(who) + ": NCHW tensor required");
}
}  // namespace

PositionAttention::PositionAttention(nn::ParamStore& ps, const std::string& prefix) {
  gamma = ps.add(prefix + ".gamma", Tensor::zeros({1}));
}

AttentionResult PositionAttention::forward(const Value& f) const {
  check_nchw(f->val, "position_attention");
  const int n = f->val.dim(0), c = f->val.dim(1), h = f->val.dim(2), w = f->val.dim(3);
  const int hw = h * w;
  auto fr = ops::reshape(f, {n, c, hw});        // F'^T rows = channels
  auto fp = ops::transpose12(fr);               // F'  [n, hw, c]
  auto energy = ops::bmm(fp, fr);               // [n, hw, hw]
  auto attn = ops::softmax_lastdim(energy);     // rows: queries over keys
  auto attended = ops::bmm(attn, fp);           // [n, hw, c]
  auto att_map = ops::reshape(ops::transpose12(attended), {n, c, h, w});
  auto out = ops::add(f, ops::scale_by(att_map, gamma));
  return {out, attn->val};
}

ChannelAttention::ChannelAttention(nn::ParamStore& ps, const std::string& prefix) {
  gamma = ps.add(prefix + ".gamma", Tensor::zeros({1}));
}

AttentionResult ChannelAttention::forward(const Value& f) const {
  check_nchw(f->val, "channel_attention");
  const int n = f->val.dim(0), c = f->val.dim(1), h = f->val.dim(2), w = f->val.dim(3);
  const int hw = h * w;
  auto fr = ops::reshape(f, {n, c, hw});
  auto energy = ops::bmm(fr, ops::transpose12(fr));  // [n, c, c]
  auto attn = ops::softmax_lastdim(energy);
  auto attended = ops::bmm(attn, fr);                // [n, c, hw]
  auto att_map = ops::reshape(attended, {n, c, h, w});
  auto out = ops::add(f, ops::scale_by(att_map, gamma));
  return {out, attn->val};
}

DualAttention::DualAttention(nn::ParamStore& ps, const std::string& prefix, Rng& rng, int channels)
    : pos(ps, prefix + ".pos"), chan(ps, prefix + ".chan") {
  fuse = nn::Conv2d(ps, prefix + ".fuse", rng, 2 * channels, channels, 1, 1, 0);
  fuse.averaging_init();
}

DualAttention::Result DualAttention::forward(const Value& f) const {
  auto p = pos.forward(f);
  auto ch = chan.forward(f);
  auto fused = fuse.forward(ops::concat_c(p.out, ch.out));
  return {fused, p.out, ch.out, std::move(p.weights), std::move(ch.weights)};
}

FloatGrid query_attention_map(const Tensor& pos_weights, int n, int y, int x, int h, int w) {
  if (pos_weights.rank() != 3 || pos_weights.dim(1) != h * w || pos_weights.dim(2) != h * w)
    throw std::invalid_argument("query_attention_map: weight matrix does not match h*w");
  if (n < 0 || n >= pos_weights.dim(0) || y < 0 || y >= h || x < 0 || x >= w)
    throw std::out_of_range("query_attention_map: query pixel (" + std::to_string(y) + "," +
                            std::to_string(x) + ") outside " + std::to_string(h) + "x" +
                            std::to_string(w));
  FloatGrid out(h, w);
  const int q = y * w + x;
  for (int k = 0; k < h * w; ++k) out.v[static_cast<size_t>(k)] = pos_weights.at3(n, q, k);
  return out;
}

RegionDecisionMap region_construction(const Tensor& b1_logits, const Tensor& c1_logits,
                                      const Tensor& features) {
  check_nchw(b1_logits, "region_construction(b1)");
  check_nchw(c1_logits, "region_construction(c1)");
  check_nchw(features, "region_construction(features)");
  const int h = b1_logits.dim(2), w = b1_logits.dim(3);
  if (c1_logits.dim(2) != h || c1_logits.dim(3) != w)
    throw std::invalid_argument("region_construction: b1 and c1 resolutions differ");
  if (features.dim(2) != h || features.dim(3) != w)
    throw std::invalid_argument("region_construction: feature resolution differs");

  RegionDecisionMap rdm;
  rdm.h = h;
  rdm.w = w;
  rdm.region_id = LabelGrid(h, w, -1);

  // boundary mask = sigmoid(b1) > 0.5  <=>  logit > 0
  std::vector<bool> boundary(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) boundary[static_cast<size_t>(y) * w + x] = b1_logits.at4(0, 0, y, x) > 0.0;

  LabelGrid sem = ops::argmax_channels(c1_logits, 0);

  bool any_interior = false;
  for (bool b : boundary)
    if (!b) {
      any_interior = true;
      break;
    }

  int next_id = 0;
  if (!any_interior) {
    // degenerate all-boundary map: one region covering everything
    rdm.region_id.v.assign(rdm.region_id.v.size(), 0);
    next_id = 1;
  } else {
    // 4-connected components of the semantic map, boundary pixels removed
    std::deque<int> queue;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int idx = y * w + x;
        if (boundary[static_cast<size_t>(idx)] || rdm.region_id.v[static_cast<size_t>(idx)] >= 0)
          continue;
        const int id = next_id++;
        rdm.region_id.v[static_cast<size_t>(idx)] = id;
        queue.push_back(idx);
        while (!queue.empty()) {
          const int cur = queue.front();
          queue.pop_front();
          const int cy = cur / w, cx = cur % w;
          static const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
          for (int d = 0; d < 4; ++d) {
            const int ny = cy + dy[d], nx = cx + dx[d];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const int nidx = ny * w + nx;
            if (boundary[static_cast<size_t>(nidx)]) continue;
            if (rdm.region_id.v[static_cast<size_t>(nidx)] >= 0) continue;
            if (sem.at(ny, nx) != sem.at(cy, cx)) continue;
            rdm.region_id.v[static_cast<size_t>(nidx)] = id;
            queue.push_back(nidx);
          }
        }
      }
    }
    // absorb boundary pixels into the nearest region, BFS layer by layer;
    // ties within a layer resolve to the lowest region id
    std::vector<int> frontier;
    for (int i = 0; i < h * w; ++i)
      if (rdm.region_id.v[static_cast<size_t>(i)] >= 0) frontier.push_back(i);
    while (true) {
      std::vector<std::pair<int, int32_t>> assign;  // (idx, id)
      for (int cur : frontier) {
        const int cy = cur / w, cx = cur % w;
        static const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int nidx = ny * w + nx;
          if (rdm.region_id.v[static_cast<size_t>(nidx)] >= 0) continue;
          assign.emplace_back(nidx, rdm.region_id.v[static_cast<size_t>(cur)]);
        }
      }
      if (assign.empty()) break;
      std::sort(assign.begin(), assign.end());
      std::vector<int> next;
      for (size_t i = 0; i < assign.size(); ++i) {
        if (i > 0 && assign[i].first == assign[i - 1].first) continue;  // lowest id kept
        rdm.region_id.v[static_cast<size_t>(assign[i].first)] = assign[i].second;
        next.push_back(assign[i].first);
      }
      frontier = std::move(next);
    }
  }

  rdm.num_regions = next_id;

  // prototypes = per-region mean feature, representative = closest pixel
  const int c = features.dim(1);
  rdm.prototypes = Tensor({rdm.num_regions, c});
  std::vector<int64_t> counts(static_cast<size_t>(rdm.num_regions), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int32_t k = rdm.region_id.at(y, x);
      ++counts[static_cast<size_t>(k)];
      for (int ch = 0; ch < c; ++ch) rdm.prototypes.at2(k, ch) += features.at4(0, ch, y, x);
    }
  for (int k = 0; k < rdm.num_regions; ++k)
    for (int ch = 0; ch < c; ++ch) rdm.prototypes.at2(k, ch) /= static_cast<double>(counts[static_cast<size_t>(k)]);

  rdm.representatives.assign(static_cast<size_t>(rdm.num_regions), {-1, -1});
  std::vector<double> best(static_cast<size_t>(rdm.num_regions), 1e300);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int32_t k = rdm.region_id.at(y, x);
      double d2 = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double diff = features.at4(0, ch, y, x) - rdm.prototypes.at2(k, ch);
        d2 += diff * diff;
      }
      if (d2 < best[static_cast<size_t>(k)]) {
        best[static_cast<size_t>(k)] = d2;
        rdm.representatives[static_cast<size_t>(k)] = {y, x};
      }
    }

  // region class = majority semantic label (lowest id on ties)
  rdm.region_class.assign(static_cast<size_t>(rdm.num_regions), 0);
  const int num_sem = c1_logits.dim(1);
  std::vector<std::vector<int64_t>> votes(static_cast<size_t>(rdm.num_regions),
                                          std::vector<int64_t>(static_cast<size_t>(num_sem), 0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      ++votes[static_cast<size_t>(rdm.region_id.at(y, x))][static_cast<size_t>(sem.at(y, x))];
  for (int k = 0; k < rdm.num_regions; ++k) {
    int bestc = 0;
    int64_t bestv = -1;
    for (int s = 0; s < num_sem; ++s)
      if (votes[static_cast<size_t>(k)][static_cast<size_t>(s)] > bestv) {
        bestv = votes[static_cast<size_t>(k)][static_cast<size_t>(s)];
        bestc = s;
      }
    rdm.region_class[static_cast<size_t>(k)] = bestc;
  }
  return rdm;
}

Value region_interaction(const Value& f, const RegionDecisionMap& rdm) {
  check_nchw(f->val, "region_interaction");
  if (f->val.dim(0) != 1)
    throw std::invalid_argument("region_interaction: single-item feature map required");
  if (f->val.dim(2) != rdm.h || f->val.dim(3) != rdm.w)
    throw std::invalid_argument("region_interaction: region map does not cover the feature extent");

  // stage 1: add each pixel's region prototype
  auto proto = ops::region_mean(f, rdm.region_id, rdm.num_regions);  // [1,K,C]
  auto stage1 = ops::add(f, ops::region_broadcast(proto, rdm.region_id));

  // stage 2: prototypes attend over each other, updated prototypes broadcast
  auto energy = ops::bmm(proto, ops::transpose12(proto));  // [1,K,K]
  auto attn = ops::softmax_lastdim(energy);
  auto proto2 = ops::bmm(attn, proto);
  return ops::add(stage1, ops::region_broadcast(proto2, rdm.region_id));
}

}  // namespace panoda::attention
