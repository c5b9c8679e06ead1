#pragma once

#include <string>
#include <vector>

#include "panoda/autodiff.hpp"
#include "panoda/tensor.hpp"

namespace panoda::checkpoint {

// Single-file archive of named double tensors with a JSON header. The header
// carries free-form metadata (architecture mode, channel sizes, class-map
// hash, iteration, rng state); blobs are raw little-endian doubles, so a
// write/read round trip is bit-exact.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void save_archive(const std::string& path, const std::string& meta_json,
                  const std::vector<NamedTensor>& tensors);

struct Archive {
  std::string meta_json;
  std::vector<NamedTensor> tensors;

  const Tensor& find(const std::string& name) const;
  bool has(const std::string& name) const;
};

Archive load_archive(const std::string& path);

}  // namespace panoda::checkpoint
