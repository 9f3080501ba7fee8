#pragma once

#include <cstdint>
#include <vector>

#include "atr/image.hpp"
#include "atr/regression.hpp"

namespace atr {

inline constexpr double kVisibilityGate = 0.5;
inline constexpr double kSeedThreshold = 0.5;
inline constexpr int kSeedFilterSize = 10;
inline constexpr int kColorBins = 16;

struct MorphResult {
  FloatMap map;
  bool degenerate = false;  // visible label with an empty box
};

// Gate on v >= 0.5, then bilinearly resize the normalized mask to the box
// (edges rounded to whole pixels) and paste it clipped to the frame.
MorphResult morph_mask(const FloatMap& mask, const ShapeParams& shape, int width, int height);

// Pixel-wise maximum over the foreground maps.
FloatMap foreground_confidence(const std::vector<FloatMap>& maps);

// size x size square window with offsets -size/2 .. size-1-size/2. Pixels
// outside the frame read as `outside`.
BoolMask erode(const BoolMask& mask, int size, std::uint8_t outside = 0);
BoolMask dilate(const BoolMask& mask, int size, std::uint8_t outside = 0);
BoolMask invert(const BoolMask& mask);

struct SeedSet {
  BoolMask foreground;
  BoolMask background;
};

// fg = erode(c_f > 0.5); bg = dilate(not (c_f > 0.5)) minus the fg mask.
SeedSet generate_seeds(const FloatMap& foreground, int size = kSeedFilterSize);

// Add-one smoothed joint 16^3 RGB histograms of both seed sets; the result is
// P_bg / (P_bg + P_fg) per pixel. Empty fg seeds give 1, empty bg seeds 0.
FloatMap background_confidence(const RgbImage& image, const SeedSet& seeds);

}  // namespace atr
