#pragma once

#include <array>
#include <vector>

#include "panoda/autodiff.hpp"
#include "panoda/tensor.hpp"

namespace panoda::ops {

using ad::Value;

// ---- arithmetic -----------------------------------------------------------
Value add(const Value& a, const Value& b);                 // same shape
Value sub(const Value& a, const Value& b);
Value scale(const Value& a, double k);
Value scale_by(const Value& a, const Value& gamma);        // gamma: shape {1}
Value add_scalars(const std::vector<Value>& terms);        // sum of {1}-tensors
Value sum(const Value& a);
Value mean(const Value& a);

// ---- activations ----------------------------------------------------------
Value relu(const Value& a);
Value leaky_relu(const Value& a, double slope);
Value sigmoid(const Value& a);

// ---- shape ----------------------------------------------------------------
Value reshape(const Value& a, std::vector<int> shape);
Value transpose12(const Value& a);                         // [N,A,B] -> [N,B,A]
Value concat_c(const Value& a, const Value& b);            // NCHW channel concat
Value slice_n(const Value& a, int n);                      // [N,...] -> [1,...]
Value stack_n(const std::vector<Value>& items);            // concat along N

// ---- linear algebra --------------------------------------------------------
Value bmm(const Value& a, const Value& b);                 // [N,A,B]x[N,B,C]
Value softmax_lastdim(const Value& a);                     // rank-3, softmax over last

// ---- conv / norm / resample -------------------------------------------------
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad,
             bool pad_to_min_output = false);
Value group_norm(const Value& x, const Value& gamma, const Value& beta, int groups,
                 double eps = 1e-5);
// Bilinear, align_corners=true. Upscaling only (throws on a downscale request).
Value upsample_bilinear(const Value& x, int out_h, int out_w);

// ---- fused losses -----------------------------------------------------------
// Weight-normalized class-weighted pixel cross-entropy with ignore label.
// logits [N,K,H,W], labels as N grids. Throws if every pixel is ignored.
Value weighted_cross_entropy(const Value& logits, const std::vector<LabelGrid>& labels,
                             const std::array<double, kNumClasses>& weights);
// Mean over all elements of BCE-with-logits against a constant 0/1 target.
Value bce_logits_const(const Value& logits, double target01);
// Per-pixel binary targets {0,1} with ignore; positives weighted by pos_weight.
Value bce_logits_map(const Value& logits, const std::vector<LabelGrid>& targets,
                     double pos_weight);
// -sum(phi(x) log phi(x)) over all elements, / batch. phi = sigmoid.
Value entropy_conf_loss(const Value& x);

// ---- region ops -------------------------------------------------------------
// region ids: h*w grid of 0..K-1. F is [1,C,h,w].
Value region_mean(const Value& f, const LabelGrid& region_ids, int num_regions);  // [1,K,C]
Value region_broadcast(const Value& prototypes, const LabelGrid& region_ids);     // [1,C,h,w]

// ---- plain-tensor helpers (no autodiff) --------------------------------------
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);   // NCHW, any scale
LabelGrid nearest_resize(const LabelGrid& g, int out_h, int out_w);
void softmax_channels(const Tensor& logits, Tensor& probs);      // NCHW over C
LabelGrid argmax_channels(const Tensor& logits, int n);          // one item's argmax

}  // namespace panoda::ops
