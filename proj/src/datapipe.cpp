#include "panoda/datapipe.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include "panoda/image_io.hpp"
#include "panoda/ops.hpp"

namespace fs = std::filesystem;

namespace panoda::datapipe {

ClassMap ClassMap::cityscapes19() {
  ClassMap m;
  m.names_ = {"road",         "sidewalk", "building", "wall",   "fence",
              "pole",         "traffic light", "traffic sign", "vegetation", "terrain",
              "sky",          "person",   "rider",    "car",    "truck",
              "bus",          "train",    "motorcycle", "bicycle"};
  m.palette_ = {{{128, 64, 128},
                 {244, 35, 232},
                 {70, 70, 70},
                 {102, 102, 156},
                 {190, 153, 153},
                 {153, 153, 153},
                 {250, 170, 30},
                 {220, 220, 0},
                 {107, 142, 35},
                 {152, 251, 152},
                 {70, 130, 180},
                 {220, 20, 60},
                 {255, 0, 0},
                 {0, 0, 142},
                 {0, 0, 70},
                 {0, 60, 100},
                 {0, 80, 100},
                 {0, 0, 230},
                 {119, 11, 32}}};
  return m;
}

ClassMap ClassMap::apolloscape16() {
  ClassMap m = cityscapes19();
  std::vector<int32_t> table(kNumClasses);
  for (int i = 0; i < kNumClasses; ++i) table[static_cast<size_t>(i)] = i;
  table[static_cast<size_t>(m.id_of("terrain"))] = kIgnoreLabel;
  table[static_cast<size_t>(m.id_of("sky"))] = kIgnoreLabel;
  table[static_cast<size_t>(m.id_of("train"))] = kIgnoreLabel;
  m.set_remap(std::move(table));
  return m;
}

int ClassMap::id_of(const std::string& name) const {
  for (int i = 0; i < kNumClasses; ++i)
    if (names_[static_cast<size_t>(i)] == name) return i;
  throw std::invalid_argument("unknown class name: " + name);
}

void ClassMap::set_remap(std::vector<int32_t> table) {
  for (int32_t v : table)
    if (v != kIgnoreLabel && (v < 0 || v >= kNumClasses))
      throw std::invalid_argument("remap table value out of range: " + std::to_string(v));
  remap_ = std::move(table);
}

int32_t ClassMap::remap(int32_t foreign) const {
  if (foreign == kIgnoreLabel) return kIgnoreLabel;
  if (foreign < 0 || foreign >= static_cast<int32_t>(remap_.size()))
    throw std::invalid_argument("foreign label id " + std::to_string(foreign) +
                                " outside the remap table");
  return remap_[static_cast<size_t>(foreign)];
}

std::array<uint8_t, 3> ClassMap::color_of(int32_t label) const {
  if (label == kIgnoreLabel) return {0, 0, 0};
  if (label < 0 || label >= kNumClasses)
    throw std::invalid_argument("label id out of range: " + std::to_string(label));
  return palette_[static_cast<size_t>(label)];
}

int32_t ClassMap::label_of_color(uint8_t r, uint8_t g, uint8_t b) const {
  if (r == 0 && g == 0 && b == 0) return kIgnoreLabel;
  for (int i = 0; i < kNumClasses; ++i) {
    const auto& c = palette_[static_cast<size_t>(i)];
    if (c[0] == r && c[1] == g && c[2] == b) return i;
  }
  throw std::invalid_argument("color not in the palette");
}

uint64_t ClassMap::hash() const {
  // FNV-1a over names and palette bytes
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (int i = 0; i < kNumClasses; ++i) {
    for (char c : names_[static_cast<size_t>(i)]) mix(static_cast<uint8_t>(c));
    for (uint8_t c : palette_[static_cast<size_t>(i)]) mix(c);
  }
  return h;
}

Layout layout_from_string(const std::string& s) {
  if (s == "cityscapes") return Layout::cityscapes;
  if (s == "densepass") return Layout::densepass;
  if (s == "synthetic") return Layout::synthetic;
  throw std::invalid_argument("unknown dataset layout '" + s + "'");
}

namespace {

std::vector<std::string> sorted_pngs(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::string& root, const std::string& split, Layout layout) {
  if (!fs::exists(root))
    throw std::runtime_error("dataset root does not exist: " + root);
  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.layout = layout;

  if (layout == Layout::cityscapes) {
    const fs::path img_dir = fs::path(root) / "leftImg8bit" / split;
    if (!fs::exists(img_dir))
      throw std::runtime_error("missing split directory: " + img_dir.string());
    std::vector<fs::path> cities;
    for (const auto& e : fs::directory_iterator(img_dir))
      if (e.is_directory()) cities.push_back(e.path());
    std::sort(cities.begin(), cities.end());
    for (const auto& city : cities) {
      for (const auto& img : sorted_pngs(city)) {
        ManifestEntry entry;
        entry.image_path = img;
        const std::string stem = fs::path(img).stem().string();
        const std::string base = stem.substr(0, stem.rfind("_leftImg8bit"));
        entry.id = city.filename().string() + "/" + base;
        const fs::path lab = fs::path(root) / "gtFine" / split / city.filename() /
                             (base + "_gtFine_labelTrainIds.png");
        if (fs::exists(lab)) entry.label_path = lab.string();
        m.entries.push_back(std::move(entry));
      }
    }
  } else {
    const fs::path img_dir = fs::path(root) / split;
    if (!fs::exists(img_dir))
      throw std::runtime_error("missing split directory: " + img_dir.string());
    const fs::path lab_dir = fs::path(root) / (split + "_labels");
    const bool want_labels =
        layout == Layout::synthetic ? fs::exists(lab_dir) : (split == "test" && fs::exists(lab_dir));
    for (const auto& img : sorted_pngs(img_dir)) {
      ManifestEntry entry;
      entry.image_path = img;
      entry.id = fs::path(img).stem().string();
      if (want_labels) {
        const fs::path lab = lab_dir / fs::path(img).filename();
        if (fs::exists(lab)) entry.label_path = lab.string();
      }
      m.entries.push_back(std::move(entry));
    }
  }

  if (m.entries.empty())
    throw std::runtime_error("no images found for split '" + split + "' under " + root);
  return m;
}

void validate_labels(const LabelGrid& labels, const std::string& context) {
  std::set<int32_t> bad;
  for (int32_t v : labels.v)
    if (v != kIgnoreLabel && (v < 0 || v >= kNumClasses)) bad.insert(v);
  if (!bad.empty()) {
    std::ostringstream os;
    os << "invalid label values in " << context << ":";
    for (int32_t v : bad) os << " " << v;
    throw std::runtime_error(os.str());
  }
}

SampleRecord load_sample(const ManifestEntry& entry, Domain domain,
                         std::optional<std::pair<int, int>> resize_to, const ClassMap* remap) {
  SampleRecord rec;
  rec.domain = domain;
  rec.id = entry.id;

  const io::PngImage img = io::read_png(entry.image_path);
  if (img.channels != 3)
    throw std::runtime_error("expected an RGB image: " + entry.image_path);
  Tensor t({1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t.at4(0, c, y, x) =
            img.pixels[(static_cast<size_t>(y) * img.width + x) * 3 + c] / 255.0;

  std::optional<LabelGrid> label;
  if (entry.label_path) {
    const io::PngImage lab = io::read_png(*entry.label_path);
    if (lab.channels != 1)
      throw std::runtime_error("expected a single-channel label map: " + *entry.label_path);
    if (lab.width != img.width || lab.height != img.height)
      throw std::runtime_error("label/image shape mismatch for " + entry.id);
    LabelGrid g(lab.height, lab.width);
    for (int64_t i = 0; i < g.size(); ++i) g.v[static_cast<size_t>(i)] = lab.pixels[static_cast<size_t>(i)];
    if (remap && remap->has_remap()) g = map_labels(g, *remap);
    validate_labels(g, entry.id);
    label = std::move(g);
  }

  if (resize_to) {
    const auto [h, w] = *resize_to;
    t = ops::bilinear_resize(t, h, w);
    if (label) *label = ops::nearest_resize(*label, h, w);
  }

  // drop the batch dim: SampleRecord images are [3,H,W]
  Tensor img3 = Tensor::from({3, t.dim(2), t.dim(3)},
                             std::vector<double>(t.data(), t.data() + t.size()));
  rec.image = std::move(img3);
  rec.label = std::move(label);
  return rec;
}

LabelGrid map_labels(const LabelGrid& raw, const ClassMap& map) {
  if (!map.has_remap()) {
    validate_labels(raw, "map_labels(identity)");
    return raw;
  }
  std::set<int32_t> missing;
  LabelGrid out(raw.h, raw.w);
  for (int64_t i = 0; i < raw.size(); ++i) {
    const int32_t v = raw.v[static_cast<size_t>(i)];
    if (v == kIgnoreLabel) {
      out.v[static_cast<size_t>(i)] = kIgnoreLabel;
      continue;
    }
    if (v < 0 || v >= map.remap_table_size()) {
      missing.insert(v);
      continue;
    }
    out.v[static_cast<size_t>(i)] = map.remap(v);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "raw label ids absent from the remap table:";
    for (int32_t v : missing) os << " " << v;
    throw std::runtime_error(os.str());
  }
  return out;
}

SampleRecord augment(const SampleRecord& sample, Rng& rng) {
  const bool flip = rng.bernoulli(0.5);
  const int dx = static_cast<int>(rng.uniform_int(-2, 2));
  const int dy = static_cast<int>(rng.uniform_int(-2, 2));

  const int h = sample.image.dim(1), w = sample.image.dim(2);
  SampleRecord out;
  out.domain = sample.domain;
  out.id = sample.id;
  out.image = Tensor({3, h, w});
  if (sample.label) out.label = LabelGrid(h, w, kIgnoreLabel);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sy = y - dy;
      int sx = x - dx;
      if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;  // vacated: image 0, label 255
      if (flip) sx = w - 1 - sx;
      for (int c = 0; c < 3; ++c)
        out.image.data()[(static_cast<int64_t>(c) * h + y) * w + x] =
            sample.image.data()[(static_cast<int64_t>(c) * h + sy) * w + sx];
      if (sample.label) out.label->at(y, x) = sample.label->at(sy, sx);
    }
  }
  return out;
}

namespace {
LabelGrid load_label_grid(const std::string& path) {
  const io::PngImage lab = io::read_png(path);
  if (lab.channels != 1) throw std::runtime_error("expected a single-channel label map: " + path);
  LabelGrid g(lab.height, lab.width);
  for (int64_t i = 0; i < g.size(); ++i) g.v[static_cast<size_t>(i)] = lab.pixels[static_cast<size_t>(i)];
  return g;
}
}  // namespace

std::array<double, kNumClasses> compute_class_weights(const DatasetManifest& manifest, double k) {
  std::array<int64_t, kNumClasses> counts{};
  int64_t total = 0;
  bool any_label = false;
  for (const auto& e : manifest.entries) {
    if (!e.label_path) continue;
    any_label = true;
    const LabelGrid g = load_label_grid(*e.label_path);
    for (int32_t v : g.v) {
      if (v == kIgnoreLabel) continue;
      if (v < 0 || v >= kNumClasses)
        throw std::runtime_error("invalid label value " + std::to_string(v) + " in " + e.id);
      ++counts[static_cast<size_t>(v)];
      ++total;
    }
  }
  if (!any_label)
    throw std::runtime_error("compute_class_weights: manifest has no labelled entries");
  if (total == 0)
    throw std::runtime_error("compute_class_weights: no countable pixels (all labels ignored)");
  std::array<double, kNumClasses> weights{};
  for (int c = 0; c < kNumClasses; ++c) {
    const double p = static_cast<double>(counts[static_cast<size_t>(c)]) / static_cast<double>(total);
    weights[static_cast<size_t>(c)] = 1.0 / std::log(k + p);
  }
  return weights;
}

std::array<double, kNumClasses> class_pixel_histogram(const DatasetManifest& manifest) {
  std::array<double, kNumClasses> sums{};
  int64_t images = 0;
  for (const auto& e : manifest.entries) {
    if (!e.label_path) continue;
    ++images;
    const LabelGrid g = load_label_grid(*e.label_path);
    for (int32_t v : g.v)
      if (v != kIgnoreLabel) sums[static_cast<size_t>(v)] += 1.0;
  }
  if (images == 0)
    throw std::runtime_error("class_pixel_histogram: manifest has no labelled entries");
  for (double& s : sums) s /= static_cast<double>(images);
  return sums;
}

}  // namespace panoda::datapipe
