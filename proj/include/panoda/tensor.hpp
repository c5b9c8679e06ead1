#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace panoda {

// Dense row-major tensor of doubles. Rank is small (<= 4); NCHW order for
// feature maps, [K,C] for prototype matrices, {1} for scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (static_cast<int64_t>(values.size()) != count(t.shape_))
      throw std::invalid_argument("Tensor::from: value count does not match shape");
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // NCHW accessors.
  double& at4(int n, int c, int h, int w) {
    return data_[static_cast<size_t>(((int64_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at4(int n, int c, int h, int w) const {
    return data_[static_cast<size_t>(((int64_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double& at3(int a, int b, int c) {
    return data_[static_cast<size_t>((int64_t(a) * shape_[1] + b) * shape_[2] + c)];
  }
  double at3(int a, int b, int c) const {
    return data_[static_cast<size_t>((int64_t(a) * shape_[1] + b) * shape_[2] + c)];
  }
  double& at2(int a, int b) { return data_[static_cast<size_t>(int64_t(a) * shape_[1] + b)]; }
  double at2(int a, int b) const { return data_[static_cast<size_t>(int64_t(a) * shape_[1] + b)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Integer-valued 2-D grid, used for label maps and region ids.
template <typename T>
struct Grid {
  int h = 0, w = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int h_, int w_, T init = T()) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, init) {}

  T& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  T at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  int64_t size() const { return static_cast<int64_t>(v.size()); }
  bool same_shape_as(const Grid& o) const { return h == o.h && w == o.w; }
};

using LabelGrid = Grid<int32_t>;
using FloatGrid = Grid<double>;

inline constexpr int kNumClasses = 19;
inline constexpr int32_t kIgnoreLabel = 255;

}  // namespace panoda
