#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "panoda/rng.hpp"
#include "panoda/tensor.hpp"

namespace panoda::datapipe {

enum class Domain { source, target };

// The 19 Cityscapes train classes, id<->name table, RGB palette, and an
// optional remap from a foreign ontology (unmapped ids -> 255).
class ClassMap {
 public:
  static ClassMap cityscapes19();
  // 16-class ApolloScape-style ontology: terrain, sky and train have no
  // counterpart and map to ignore.
  static ClassMap apolloscape16();

  const std::array<std::string, kNumClasses>& names() const { return names_; }
  int id_of(const std::string& name) const;
  const std::array<std::array<uint8_t, 3>, kNumClasses>& palette() const { return palette_; }

  bool has_remap() const { return !remap_.empty(); }
  void set_remap(std::vector<int32_t> table);  // index = foreign id, value in {0..18, 255}
  int32_t remap(int32_t foreign) const;        // throws on out-of-table ids
  int32_t remap_table_size() const { return static_cast<int32_t>(remap_.size()); }

  std::array<uint8_t, 3> color_of(int32_t label) const;  // ignore -> black
  int32_t label_of_color(uint8_t r, uint8_t g, uint8_t b) const;  // exact match or throw

  uint64_t hash() const;  // stable digest of names+palette for checkpoints

 private:
  std::array<std::string, kNumClasses> names_;
  std::array<std::array<uint8_t, 3>, kNumClasses> palette_;
  std::vector<int32_t> remap_;
};

struct SampleRecord {
  Tensor image;  // [3,H,W] in [0,1]
  std::optional<LabelGrid> label;
  Domain domain = Domain::source;
  std::string id;
};

struct ManifestEntry {
  std::string image_path;
  std::optional<std::string> label_path;
  std::string id;
};

enum class Layout { cityscapes, densepass, synthetic };
Layout layout_from_string(const std::string& s);

struct DatasetManifest {
  std::string root;
  std::string split;
  Layout layout = Layout::synthetic;
  std::vector<ManifestEntry> entries;
};

// Enumerates (image, label?) pairs in lexicographic order.
//  cityscapes: leftImg8bit/<split>/<city>/*_leftImg8bit.png with labels at
//              gtFine/<split>/<city>/*_gtFine_labelTrainIds.png
//  densepass:  <split>/*.png flat; only the test split reads <split>_labels/
//  synthetic:  <split>/*.png flat; <split>_labels/ attached whenever present
DatasetManifest load_manifest(const std::string& root, const std::string& split, Layout layout);

// Decodes one entry. Bilinear image / nearest label resize when resize_to is
// given; label values validated (through the remap when provided).
SampleRecord load_sample(const ManifestEntry& entry, Domain domain,
                         std::optional<std::pair<int, int>> resize_to = std::nullopt,
                         const ClassMap* remap = nullptr);

// Applies a remap table; output values in {0..18, 255}. Throws listing every
// offending id when the table does not cover the observed raw ids.
LabelGrid map_labels(const LabelGrid& raw, const ClassMap& map);

// Joint horizontal flip with probability 1/2, then an independent integer
// translation dx, dy in [-2, 2]; vacated pixels get image 0 / label 255.
SampleRecord augment(const SampleRecord& sample, Rng& rng);

// w_c = 1 / ln(k + p_c) over the manifest's label pixels (ignore excluded).
std::array<double, kNumClasses> compute_class_weights(const DatasetManifest& manifest,
                                                      double k = 1.02);

// Mean pixel count per class per image.
std::array<double, kNumClasses> class_pixel_histogram(const DatasetManifest& manifest);

// Validates every value is a class id or ignore; throws listing offenders.
void validate_labels(const LabelGrid& labels, const std::string& context);

}  // namespace panoda::datapipe
