#pragma once

#include <vector>

#include "atr/image.hpp"

namespace atr {

// Per-pixel segment ids 0..count-1; every segment is 4-connected.
struct SuperPixelMap {
  Grid<int> ids;
  int count = 0;
};

struct FelzenszwalbParams {
  double k = 100.0;
  int min_size = 20;
  double sigma = 0.8;
};

// Graph-based segmentation over the 8-connected grid with Euclidean RGB
// edge weights after Gaussian smoothing. Components are then split into
// 4-connected pieces and pieces below min_size are merged into their
// cheapest 4-neighbour.
SuperPixelMap felzenszwalb_segment(const RgbImage& image, const FelzenszwalbParams& params = {});

// maps[k] is the confidence of label k (0 = background). Every pixel of a
// segment gets argmax_k of the summed confidences, lowest index on ties.
LabelMap superpixel_smooth(const std::vector<FloatMap>& maps, const SuperPixelMap& segments);

}  // namespace atr
