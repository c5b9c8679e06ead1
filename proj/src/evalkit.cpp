#include "panoda/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "panoda/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace panoda::evalkit {

void ConfusionMatrix::update(const LabelGrid& pred, const LabelGrid& gt) {
  if (!pred.same_shape_as(gt))
    throw std::invalid_argument("ConfusionMatrix::update: shape mismatch");
  for (int64_t i = 0; i < gt.size(); ++i) {
    const int32_t g = gt.v[static_cast<size_t>(i)];
    if (g == kIgnoreLabel) continue;
    const int32_t p = pred.v[static_cast<size_t>(i)];
    if (g < 0 || g >= kNumClasses || p < 0 || p >= kNumClasses)
      throw std::invalid_argument("ConfusionMatrix::update: label value out of range");
    ++m_[static_cast<size_t>(g) * kNumClasses + p];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (size_t i = 0; i < m_.size(); ++i) m_[i] += o.m_[i];
  return *this;
}

uint64_t ConfusionMatrix::total() const {
  uint64_t t = 0;
  for (uint64_t v : m_) t += v;
  return t;
}

IouReport iou_report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("iou_report: empty confusion matrix");
  IouReport r;
  uint64_t trace = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    uint64_t row = 0, col = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    trace += cm.at(c, c);
    const uint64_t uni = row + col - cm.at(c, c);
    if (uni == 0) continue;  // absent from gt and prediction: not scored
    r.present[static_cast<size_t>(c)] = true;
    r.iou[static_cast<size_t>(c)] = static_cast<double>(cm.at(c, c)) / static_cast<double>(uni);
    r.miou += r.iou[static_cast<size_t>(c)];
    ++r.classes_counted;
  }
  if (r.classes_counted > 0) r.miou /= r.classes_counted;
  r.pixel_acc = static_cast<double>(trace) / static_cast<double>(cm.total());
  return r;
}

DirectionalReport directional_report(const std::vector<LabelGrid>& preds,
                                     const std::vector<LabelGrid>& gts, int sectors) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("directional_report: batch size mismatch");
  if (sectors < 1) throw std::invalid_argument("directional_report: sectors must be >= 1");
  DirectionalReport rep;
  rep.sectors = sectors;
  rep.sector_cm.resize(static_cast<size_t>(sectors));

  for (size_t i = 0; i < preds.size(); ++i) {
    const LabelGrid& p = preds[i];
    const LabelGrid& g = gts[i];
    if (!p.same_shape_as(g)) throw std::invalid_argument("directional_report: shape mismatch");
    const int w = p.w;
    const int bw = std::max(w / sectors, 1);
    // sector 0 is centered on the forward direction = image center column
    const int shift = w / 2 - bw / 2;
    for (int x = 0; x < w; ++x) {
      const int shifted = ((x - shift) % w + w) % w;
      const int sec = std::min(shifted / bw, sectors - 1);  // remainder -> last sector
      // accumulate one column at a time
      LabelGrid pc(p.h, 1), gc(p.h, 1);
      for (int y = 0; y < p.h; ++y) {
        pc.at(y, 0) = p.at(y, x);
        gc.at(y, 0) = g.at(y, x);
      }
      rep.sector_cm[static_cast<size_t>(sec)].update(pc, gc);
    }
    rep.global.update(p, g);
  }
  rep.sector_report.reserve(static_cast<size_t>(sectors));
  for (const auto& cm : rep.sector_cm)
    rep.sector_report.push_back(cm.total() > 0 ? iou_report(cm) : IouReport{});
  return rep;
}

double miou_gap(double src_score, double tgt_score) { return tgt_score - src_score; }

FpsResult fps_benchmark(const std::function<void(const Tensor&)>& forward, int height, int width,
                        int n, int warmup) {
  FpsResult r;
  r.n = n;
  r.batch = 1;
  r.height = height;
  r.width = width;
  {
    std::ostringstream os;
    os << std::thread::hardware_concurrency() << "-thread CPU";
    r.hardware = os.str();
  }
  Rng rng(1234);
  Tensor img({1, 3, height, width});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  for (int i = 0; i < warmup; ++i) forward(img);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n; ++i) forward(img);
  const auto t1 = std::chrono::steady_clock::now();
  r.total_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.fps = n / r.total_seconds;
  return r;
}

void export_visuals(const LabelGrid& pred, const LabelGrid* gt, const datapipe::ClassMap& palette,
                    const FloatGrid* uncertainty, const std::string& out_dir,
                    const std::string& stem) {
  fs::create_directories(out_dir);
  auto colorize = [&palette](const LabelGrid& lab) {
    std::vector<uint8_t> rgb(static_cast<size_t>(lab.h) * lab.w * 3);
    for (int64_t i = 0; i < lab.size(); ++i) {
      const auto c = palette.color_of(lab.v[static_cast<size_t>(i)]);
      rgb[static_cast<size_t>(i) * 3 + 0] = c[0];
      rgb[static_cast<size_t>(i) * 3 + 1] = c[1];
      rgb[static_cast<size_t>(i) * 3 + 2] = c[2];
    }
    return rgb;
  };
  io::write_png_rgb((fs::path(out_dir) / (stem + "_pred.png")).string(), pred.w, pred.h,
                    colorize(pred));
  if (gt)
    io::write_png_rgb((fs::path(out_dir) / (stem + "_gt.png")).string(), gt->w, gt->h,
                      colorize(*gt));
  if (uncertainty) {
    double lo = uncertainty->v.empty() ? 0.0 : uncertainty->v[0], hi = lo;
    for (double v : uncertainty->v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::vector<uint8_t> gray(uncertainty->v.size(), 0);
    if (hi > lo)
      for (size_t i = 0; i < gray.size(); ++i)
        gray[i] = static_cast<uint8_t>(
            std::lround(255.0 * (uncertainty->v[i] - lo) / (hi - lo)));
    io::write_png_gray((fs::path(out_dir) / (stem + "_uncertainty.png")).string(), uncertainty->w,
                       uncertainty->h, gray);
    json side;
    side["min"] = lo;
    side["max"] = hi;
    std::ofstream f(fs::path(out_dir) / (stem + "_uncertainty.json"));
    f << side.dump(2) << "\n";
  }
}

void export_attention_map(const FloatGrid& map, int query_y, int query_x,
                          const std::string& out_dir, const std::string& stem) {
  fs::create_directories(out_dir);
  double lo = map.v.empty() ? 0.0 : map.v[0], hi = lo;
  for (double v : map.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<uint8_t> gray(map.v.size(), 0);
  if (hi > lo)
    for (size_t i = 0; i < gray.size(); ++i)
      gray[i] = static_cast<uint8_t>(std::lround(255.0 * (map.v[i] - lo) / (hi - lo)));
  io::write_png_gray((fs::path(out_dir) / (stem + "_attention.png")).string(), map.w, map.h, gray);
  json side;
  side["query"] = {{"y", query_y}, {"x", query_x}};
  side["min"] = lo;
  side["max"] = hi;
  std::ofstream f(fs::path(out_dir) / (stem + "_attention.json"));
  f << side.dump(2) << "\n";
}

std::string render_table(const std::vector<std::pair<std::string, IouReport>>& rows,
                         const datapipe::ClassMap& classes) {
  std::ostringstream os;
  os << std::left;
  size_t name_w = 10;
  for (const auto& [name, rep] : rows) name_w = std::max(name_w, name.size() + 2);
  os.width(static_cast<std::streamsize>(name_w));
  os << "method";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%8s", "mIoU");
  os << buf;
  for (const auto& n : classes.names()) {
    std::snprintf(buf, sizeof(buf), " %12s", n.substr(0, 12).c_str());
    os << buf;
  }
  os << "\n";
  for (const auto& [name, rep] : rows) {
    os.width(static_cast<std::streamsize>(name_w));
    os << name;
    std::snprintf(buf, sizeof(buf), "%8.1f", 100.0 * rep.miou);
    os << buf;
    for (int c = 0; c < kNumClasses; ++c) {
      if (rep.present[static_cast<size_t>(c)])
        std::snprintf(buf, sizeof(buf), " %12.1f", 100.0 * rep.iou[static_cast<size_t>(c)]);
      else
        std::snprintf(buf, sizeof(buf), " %12s", "-");
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string render_gap_table(const std::vector<GapRow>& rows) {
  std::ostringstream os;
  os << std::left;
  size_t name_w = 10;
  for (const auto& r : rows) name_w = std::max(name_w, r.network.size() + 2);
  char buf[64];
  os.width(static_cast<std::streamsize>(name_w));
  os << "network";
  std::snprintf(buf, sizeof(buf), "%10s%12s%10s", "source", "target", "mIoU gap");
  os << buf << "\n";
  for (const auto& r : rows) {
    os.width(static_cast<std::streamsize>(name_w));
    os << r.network;
    std::snprintf(buf, sizeof(buf), "%10.1f%12.1f%10.1f", r.src_score, r.tgt_score,
                  miou_gap(r.src_score, r.tgt_score));
    os << buf << "\n";
  }
  return os.str();
}

}  // namespace panoda::evalkit
