#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "atr/tensor.hpp"

namespace atr {

// Axis-aligned box in pixel units, (x, y) is the top-left corner.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  [[nodiscard]] double right() const { return x + w; }
  [[nodiscard]] double bottom() const { return y + h; }
  [[nodiscard]] double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
  friend bool operator==(const Box&, const Box&) = default;
};

double intersection_over_union(const Box& a, const Box& b);

// Integer pixel rectangle [x, x+w) x [y, y+h).
struct Rect {
  int x = 0, y = 0, w = 0, h = 0;

  [[nodiscard]] bool empty() const { return w <= 0 || h <= 0; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

Rect clip(const Rect& r, int width, int height);

// Row-major single-channel raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), values_(static_cast<std::size_t>(width) * height, fill) {}

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool empty() const { return values_.empty(); }

  T& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  [[nodiscard]] const T& at(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::vector<T>& values() { return values_; }
  [[nodiscard]] const std::vector<T>& values() const { return values_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

// Per-pixel label indices, 0 = background.
using LabelMap = Grid<std::uint8_t>;
using FloatMap = Grid<float>;
using BoolMask = Grid<std::uint8_t>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using RgbImage = Grid<Rgb>;

RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const RgbImage& image, const std::filesystem::path& path);

// Labels are 8-bit single channel; palette PNGs are read by index.
LabelMap read_png_labels(const std::filesystem::path& path);
void write_png_labels(const LabelMap& labels, const std::filesystem::path& path);

// 8-bit grayscale dump, value = round(255 * clamp(v, 0, 1)).
void write_png_confidence(const FloatMap& map, const std::filesystem::path& path);

template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int width, int height);

// Pixel-center aligned bilinear resampling with edge clamping.
FloatMap resize_bilinear(const FloatMap& src, int width, int height);

template <typename T>
Grid<T> crop(const Grid<T>& src, const Rect& r);

template <typename T>
Grid<T> flip_horizontal(const Grid<T>& src);

// 3 x H x W tensor with values pixel/255 - 0.5.
nn::Tensor to_tensor(const RgbImage& image);

}  // namespace atr
