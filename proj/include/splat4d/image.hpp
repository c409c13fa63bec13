#pragma once

#include <cstdint>
#include <vector>

#include "splat4d/errors.hpp"

namespace splat4d {

// Dense row-major image with interleaved channels, double precision.
// Pixel (x, y) covers [x, x+1) x [y, y+1); its center is (x+0.5, y+0.5).
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  void require_shape(const Image& o, const char* what) const {
    if (!same_shape(o)) throw ShapeMismatch(what);
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// H x W boolean mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill ? 1 : 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty_shape() const { return data_.empty(); }

  bool at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { data_[static_cast<size_t>(y) * width_ + x] = v ? 1 : 0; }

  size_t count() const {
    size_t n = 0;
    for (uint8_t v : data_) n += v;
    return n;
  }

  bool same_shape(const BinaryMask& o) const {
    return width_ == o.width_ && height_ == o.height_;
  }

  const std::vector<uint8_t>& raw() const { return data_; }
  std::vector<uint8_t>& raw() { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> data_;
};

}  // namespace splat4d
