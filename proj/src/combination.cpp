#include "atr/combination.hpp"

#include <algorithm>
#include <cmath>

#include "atr/error.hpp"

namespace atr {

MorphResult morph_mask(const FloatMap& mask, const ShapeParams& shape, int width, int height) {
  MorphResult out{FloatMap(width, height, 0.0f), false};
  if (shape.v < kVisibilityGate) return out;
  const long x0 = std::lround(shape.x), y0 = std::lround(shape.y);
  const long x1 = std::lround(shape.x + shape.w), y1 = std::lround(shape.y + shape.h);
  if (!(shape.w > 0) || !(shape.h > 0) || x1 <= x0 || y1 <= y0) {
    out.degenerate = true;
    return out;
  }
  const long bw = x1 - x0, bh = y1 - y0;
  const long cx0 = std::max(0L, x0), cy0 = std::max(0L, y0);
  const long cx1 = std::min<long>(width, x1), cy1 = std::min<long>(height, y1);
  if (cx1 <= cx0 || cy1 <= cy0) return out;
  constexpr long kMaxSide = 1 << 14;
  if (bw > kMaxSide || bh > kMaxSide) throw ValidationError("morph box is implausibly large");
  const FloatMap placed = resize_bilinear(mask, static_cast<int>(bw), static_cast<int>(bh));
  for (long y = cy0; y < cy1; ++y)
    for (long x = cx0; x < cx1; ++x)
      out.map.at(static_cast<int>(x), static_cast<int>(y)) =
          std::clamp(placed.at(static_cast<int>(x - x0), static_cast<int>(y - y0)), 0.0f, 1.0f);
  return out;
}

FloatMap foreground_confidence(const std::vector<FloatMap>& maps) {
  if (maps.empty()) throw ValidationError("foreground confidence of an empty map set");
  FloatMap out = maps.front();
  for (std::size_t k = 1; k < maps.size(); ++k) {
    if (maps[k].width() != out.width() || maps[k].height() != out.height())
      throw ValidationError("confidence maps differ in size");
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::max(out[p], maps[k][p]);
  }
  return out;
}

namespace {

// All-of (erosion) or any-of (dilation) over the square window, rows first
// and then columns.
BoolMask window_reduce(const BoolMask& mask, int size, std::uint8_t outside, bool all) {
  if (size < 1) throw ValidationError("structuring element size must be >= 1");
  const int w = mask.width(), h = mask.height();
  const int lo = -(size / 2), hi = size - 1 - size / 2;
  auto reduce = [&](auto read, int n, int i) {
    for (int d = lo; d <= hi; ++d) {
      const int j = i + d;
      const bool v = (j < 0 || j >= n) ? outside != 0 : read(j) != 0;
      if (all && !v) return std::uint8_t{0};
      if (!all && v) return std::uint8_t{1};
    }
    return static_cast<std::uint8_t>(all ? 1 : 0);
  };
  BoolMask rows(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rows.at(x, y) = reduce([&](int j) { return mask.at(j, y); }, w, x);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = reduce([&](int j) { return rows.at(x, j); }, h, y);
  return out;
}

}  // namespace

BoolMask erode(const BoolMask& mask, int size, std::uint8_t outside) {
  return window_reduce(mask, size, outside, true);
}

BoolMask dilate(const BoolMask& mask, int size, std::uint8_t outside) {
  return window_reduce(mask, size, outside, false);
}

BoolMask invert(const BoolMask& mask) {
  BoolMask out(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 0 : 1;
  return out;
}

SeedSet generate_seeds(const FloatMap& foreground, int size) {
  BoolMask fg(foreground.width(), foreground.height());
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = foreground[i] > kSeedThreshold ? 1 : 0;
  SeedSet seeds{erode(fg, size, 0), dilate(invert(fg), size, 0)};
  for (std::size_t i = 0; i < fg.size(); ++i)
    if (fg[i]) seeds.background[i] = 0;
  return seeds;
}

FloatMap background_confidence(const RgbImage& image, const SeedSet& seeds) {
  const int w = image.width(), h = image.height();
  for (const BoolMask* m : {&seeds.foreground, &seeds.background})
    if (m->width() != w || m->height() != h) throw ValidationError("seed masks differ from image size");
  constexpr int kShift = 8 - 4;
  constexpr std::size_t kCells = kColorBins * kColorBins * kColorBins;
  auto bin = [](const Rgb& c) {
    return (static_cast<std::size_t>(c.r >> kShift) * kColorBins + (c.g >> kShift)) * kColorBins + (c.b >> kShift);
  };
  std::vector<double> fg(kCells, 0.0), bg(kCells, 0.0);
  double n_fg = 0, n_bg = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (seeds.foreground[i]) fg[bin(image[i])] += 1, n_fg += 1;
    if (seeds.background[i]) bg[bin(image[i])] += 1, n_bg += 1;
  }
  if (n_fg == 0) return FloatMap(w, h, 1.0f);
  if (n_bg == 0) return FloatMap(w, h, 0.0f);
  FloatMap out(w, h);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::size_t b = bin(image[i]);
    const double p_bg = (bg[b] + 1.0) / (n_bg + static_cast<double>(kCells));
    const double p_fg = (fg[b] + 1.0) / (n_fg + static_cast<double>(kCells));
    out[i] = static_cast<float>(p_bg / (p_bg + p_fg));
  }
  return out;
}

}  // namespace atr
