#include "atr/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "atr/error.hpp"

namespace atr {

ParseModels ParseModels::load(const std::filesystem::path& dict, const std::filesystem::path& template_net,
                              const std::filesystem::path& shape_net) {
  namespace fs = std::filesystem;
  if (!fs::exists(dict)) throw IoError("dictionary file not found: " + dict.string());
  if (!fs::exists(template_net)) throw IoError("template net checkpoint not found: " + template_net.string());
  if (!fs::exists(shape_net)) throw IoError("shape net checkpoint not found: " + shape_net.string());
  DictionarySet dicts = load_dictionaries(dict);
  nn::Checkpoint t = nn::load_checkpoint(template_net);
  nn::Checkpoint s = nn::load_checkpoint(shape_net);
  ShapeNormalizer shapes = shape_normalizer_from(s);
  BoxRefiner refiner = box_refiner_from(s, dicts.num_labels);
  return {std::move(dicts), std::move(t.net), std::move(s.net), std::move(shapes), std::move(refiner)};
}

nn::Tensor person_input(const RgbImage& image, const Rect& region, int size) {
  return to_tensor(resize_nearest(crop(image, region), size, size));
}

std::vector<ShapeParams> predict_shapes(const nn::RegressionNet& shape_net, const ShapeNormalizer& shapes,
                                        const nn::Tensor& input) {
  const int k = shapes.num_labels;
  if (shape_net.spec().head_width() != 5 * k) throw ValidationError("shape net head width does not match 5K");
  const nn::Tensor out = shape_net.infer(input);
  std::vector<ShapeParams> result(static_cast<std::size_t>(k) + 1);
  for (int l = 1; l <= k; ++l) {
    const float* s = out.data() + (l - 1) * 5;
    ShapeParams p = denormalize(shapes, l, {s[0], s[1], s[2], s[3], s[4], ShapeSpace::normalized});
    p.w = std::max(0.0, p.w);
    p.h = std::max(0.0, p.h);
    p.v = std::clamp(p.v, 0.0, 1.0);
    result[static_cast<std::size_t>(l)] = p;
  }
  return result;
}

Box to_frame(const Box& b, const Rect& region, int size) {
  const double sx = static_cast<double>(region.w) / size, sy = static_cast<double>(region.h) / size;
  return {region.x + b.x * sx, region.y + b.y * sy, b.w * sx, b.h * sy};
}

std::vector<float> refinement_features(const nn::RegressionNet& shape_net, const RgbImage& image, const Box& box) {
  const Rect r = enlarged_region(box, kRefineEnlarge, image.width(), image.height());
  return penultimate_features(shape_net, person_input(image, r, shape_net.spec().input.width));
}

namespace {

bool usable(const Box& b) { return b.w >= 1.0 && b.h >= 1.0; }

}  // namespace

BoxRefiner fit_refiner(const nn::RegressionNet& shape_net, const ShapeNormalizer& shapes,
                       const std::vector<Sample>& samples, int num_labels) {
  const auto& dims = shape_net.dims();
  const int f = static_cast<int>(dims[dims.size() - 2].size());
  const int size = shape_net.spec().input.width;
  std::vector<std::vector<RefinerSample>> pairs(static_cast<std::size_t>(num_labels) + 1);
  for (const Sample& s : samples) {
    const Box person = s.person ? *s.person : foreground_box(s.labels).value_or(Box{0, 0, double(s.image.width()), double(s.image.height())});
    const Rect region = enlarged_region(person, kPersonEnlarge, s.image.width(), s.image.height());
    const auto predicted = predict_shapes(shape_net, shapes, person_input(s.image, region, size));
    const auto truth = label_boxes(s.labels, num_labels);
    for (int l = 1; l <= num_labels; ++l) {
      const auto li = static_cast<std::size_t>(l);
      if (!truth[li] || predicted[li].v < kVisibilityGate) continue;
      const Box p = to_frame(predicted[li].box(), region, size);
      if (!usable(p) || intersection_over_union(p, *truth[li]) < kRefineMinOverlap) continue;
      pairs[li].push_back({refinement_features(shape_net, s.image, p), p, *truth[li]});
    }
  }
  return fit_box_refiners(pairs, num_labels, f);
}

ParseResult parse_image(const ParseModels& m, const RgbImage& image, const Box& person, const ParseConfig& config) {
  if (image.empty()) throw ValidationError("cannot parse an empty image");
  const int w = image.width(), h = image.height(), k = m.dicts.num_labels;
  const int size = m.template_net.spec().input.width;
  if (m.shape_net.spec().input != m.template_net.spec().input) throw ValidationError("the two nets expect different inputs");
  ParseResult out;
  out.region = enlarged_region(person, config.enlarge, w, h);
  const nn::Tensor input = person_input(image, out.region, size);
  const StructurePrediction pred = predict_structure(m.template_net, m.shape_net, m.dicts, m.shapes, input);

  out.shapes.resize(static_cast<std::size_t>(k) + 1);
  out.confidences.assign(static_cast<std::size_t>(k) + 1, FloatMap(w, h, 0.0f));
  std::vector<FloatMap> foreground;
  for (int l = 1; l <= k; ++l) {
    const auto li = static_cast<std::size_t>(l);
    ShapeParams s = pred.shapes[li];
    Box b = to_frame(s.box(), out.region, size);
    if (config.refine_boxes && s.v >= kVisibilityGate && usable(b) && !m.refiner.is_identity(l))
      b = m.refiner.refine(l, refinement_features(m.shape_net, image, b), b, w, h);
    s.x = b.x, s.y = b.y, s.w = b.w, s.h = b.h;
    out.shapes[li] = s;
    if (const TemplateDictionary* d = m.dicts.find(l)) {
      FloatMap c = morph_mask(reconstruct_mask(*d, pred.coefficients[li]), s, w, h).map;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (x < out.region.x || y < out.region.y || x >= out.region.x + out.region.w || y >= out.region.y + out.region.h)
            c.at(x, y) = 0.0f;
      out.confidences[li] = std::move(c);
    }
    foreground.push_back(out.confidences[li]);
  }
  const SeedSet seeds = generate_seeds(foreground_confidence(foreground));
  out.confidences[0] = background_confidence(image, seeds);
  out.segments = felzenszwalb_segment(image, config.segmentation);
  out.labels = superpixel_smooth(out.confidences, out.segments);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (x < out.region.x || y < out.region.y || x >= out.region.x + out.region.w || y >= out.region.y + out.region.h)
        out.labels.at(x, y) = 0;
  return out;
}

RgbImage overlay(const RgbImage& image, const LabelMap& labels, const LabelPalette& palette, double alpha) {
  if (image.width() != labels.width() || image.height() != labels.height())
    throw ValidationError("overlay needs matching image and label dims");
  RgbImage out = image;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (labels[i] == 0) continue;
    const Rgb c = palette.color(labels[i]);
    auto mix = [alpha](std::uint8_t a, std::uint8_t b) {
      return static_cast<std::uint8_t>(std::lround((1 - alpha) * a + alpha * b));
    };
    out[i] = {mix(out[i].r, c.r), mix(out[i].g, c.g), mix(out[i].b, c.b)};
  }
  return out;
}

}  // namespace atr
