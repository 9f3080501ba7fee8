#pragma once

#include <filesystem>
#include <vector>

#include "atr/combination.hpp"
#include "atr/dataset.hpp"
#include "atr/mask_dictionary.hpp"
#include "atr/regression.hpp"
#include "atr/segmentation.hpp"

namespace atr {

struct ParseModels {
  DictionarySet dicts;
  nn::RegressionNet template_net;
  nn::RegressionNet shape_net;
  ShapeNormalizer shapes;
  BoxRefiner refiner;

  static ParseModels load(const std::filesystem::path& dict, const std::filesystem::path& template_net,
                          const std::filesystem::path& shape_net);
};

struct ParseConfig {
  double enlarge = kPersonEnlarge;
  FelzenszwalbParams segmentation;
  bool refine_boxes = true;
};

struct ParseResult {
  LabelMap labels;
  std::vector<FloatMap> confidences;  // index 0..K, 0 = background
  SuperPixelMap segments;
  std::vector<ShapeParams> shapes;    // refined, frame coordinates, index 1..K
  Rect region;                        // enlarged person box
};

// Network input for the person box enlarged by `enlarge`.
nn::Tensor person_input(const RgbImage& image, const Rect& region, int size);

// Shape-net head only, denormalized with v clamped to [0, 1].
std::vector<ShapeParams> predict_shapes(const nn::RegressionNet& shape_net, const ShapeNormalizer& shapes,
                                        const nn::Tensor& input);

// Map a box between network-input and frame coordinates of `region`.
Box to_frame(const Box& box, const Rect& region, int size);

// Penultimate shape-net activations on the box enlarged by 1.5.
std::vector<float> refinement_features(const nn::RegressionNet& shape_net, const RgbImage& image, const Box& box);

// Refinement pairs from each sample's predicted boxes (person crop x1.2) and
// ground-truth boxes, both in frame coordinates.
BoxRefiner fit_refiner(const nn::RegressionNet& shape_net, const ShapeNormalizer& shapes,
                       const std::vector<Sample>& samples, int num_labels);

ParseResult parse_image(const ParseModels& models, const RgbImage& image, const Box& person,
                        const ParseConfig& config = {});

// Image blended with palette colors of non-background labels.
RgbImage overlay(const RgbImage& image, const LabelMap& labels, const LabelPalette& palette, double alpha = 0.5);

}  // namespace atr
