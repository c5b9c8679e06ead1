#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "panoda/datapipe.hpp"
#include "panoda/tensor.hpp"

namespace panoda::evalkit {

// 19x19 counts, rows = ground truth, cols = prediction; ignore excluded.
class ConfusionMatrix {
 public:
  void update(const LabelGrid& pred, const LabelGrid& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  uint64_t at(int gt, int pred) const { return m_[static_cast<size_t>(gt) * kNumClasses + pred]; }
  uint64_t& at(int gt, int pred) { return m_[static_cast<size_t>(gt) * kNumClasses + pred]; }
  uint64_t total() const;

 private:
  std::array<uint64_t, kNumClasses * kNumClasses> m_{};
};

struct IouReport {
  std::array<double, kNumClasses> iou{};    // valid where present[c]
  std::array<bool, kNumClasses> present{};  // class has non-empty union
  double miou = 0.0;                        // mean over present classes
  double pixel_acc = 0.0;
  int classes_counted = 0;
};

// Classes absent from both gt and prediction are excluded from the mean
// (reported absent, not zero). Throws on an all-zero matrix.
IouReport iou_report(const ConfusionMatrix& cm);

struct DirectionalReport {
  int sectors = 8;
  std::vector<ConfusionMatrix> sector_cm;  // sector 0 centered on the image center
  std::vector<IouReport> sector_report;
  ConfusionMatrix global;
};

// Splits equirectangular predictions into equal-width azimuth sectors; sector
// 0 is centered on the forward direction (image center column). When the
// width is not divisible, the last sector absorbs the remainder.
DirectionalReport directional_report(const std::vector<LabelGrid>& preds,
                                     const std::vector<LabelGrid>& gts, int sectors = 8);

// Table III convention: gap = target score - source score.
double miou_gap(double src_score, double tgt_score);

struct FpsResult {
  double fps = 0.0;
  double total_seconds = 0.0;
  int n = 0, batch = 1;
  int height = 0, width = 0;
  std::string hardware;
};

// Mean forward-pass throughput of `forward` over n runs at batch 1, after
// `warmup` excluded runs.
FpsResult fps_benchmark(const std::function<void(const Tensor&)>& forward, int height, int width,
                        int n = 100, int warmup = 10);

// Color-mapped prediction PNG, optional gt PNG, optional uncertainty PNG
// (min/max normalized to 0..255) with a JSON sidecar recording the range.
void export_visuals(const LabelGrid& pred, const LabelGrid* gt, const datapipe::ClassMap& palette,
                    const FloatGrid* uncertainty, const std::string& out_dir,
                    const std::string& stem);

// Attention heatmap PNG + JSON sidecar (query pixel, normalization range).
void export_attention_map(const FloatGrid& map, int query_y, int query_x,
                          const std::string& out_dir, const std::string& stem);

// Aligned text table, mIoU first then the 19 classes in Cityscapes order.
// Values are percentages printed with one decimal; absent classes print "-".
std::string render_table(const std::vector<std::pair<std::string, IouReport>>& rows,
                         const datapipe::ClassMap& classes);

// One row of the published-score gap table (values are already percentages).
struct GapRow {
  std::string network;
  double src_score, tgt_score;
};
std::string render_gap_table(const std::vector<GapRow>& rows);

}  // namespace panoda::evalkit
