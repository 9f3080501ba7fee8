#include "atr/workflow.hpp"

#include <cstdio>

#include "atr/error.hpp"

namespace atr {

std::vector<Sample> augment_all(const std::vector<Sample>& samples, const LabelPalette& palette, int size) {
  std::vector<Sample> out;
  out.reserve(samples.size() * kAugmentCount);
  for (const Sample& s : samples) {
    Sample with_box = s;
    if (!with_box.person) with_box.person = foreground_box(s.labels);
    if (!with_box.person) continue;
    for (auto& a : augment(with_box, palette, size, size)) out.push_back(std::move(a));
  }
  return out;
}

std::vector<FloatMap> collect_masks(const std::vector<Sample>& crops, int label, int num_labels, int rw, int rh) {
  std::vector<FloatMap> out;
  for (const Sample& s : crops) {
    const auto masks = extract_label_masks(s.labels, num_labels);
    if (const auto& m = masks[static_cast<std::size_t>(label)]) out.push_back(resize_mask(*m, rw, rh));
  }
  return out;
}

DictionarySet learn_dictionary_set(const std::vector<Sample>& crops, int num_labels, int rw, int rh,
                                   const DictionaryLearnConfig& config, const Progress& progress) {
  if (crops.empty()) throw ValidationError("dictionary learning needs at least one sample");
  for (const Sample& s : crops) validate_sample(s, num_labels);
  DictionarySet set{num_labels, config.atoms, rw, rh, config.variant, config.lambda, {}};
  set.labels.resize(static_cast<std::size_t>(num_labels) + 1);
  for (int k = 1; k <= num_labels; ++k) {
    const auto masks = collect_masks(crops, k, num_labels, rw, rh);
    if (masks.size() < 2 || (config.variant == DictionaryVariant::pca && masks.size() < static_cast<std::size_t>(config.atoms))) {
      if (progress) progress("label " + std::to_string(k) + ": " + std::to_string(masks.size()) + " masks, skipped");
      continue;
    }
    DictionaryLearnConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(k);
    DictionaryLearnReport report;
    TemplateDictionary d = learn_dictionary(k, masks, c, &report);
    std::vector<Coefficients> codes;
    codes.reserve(masks.size());
    for (const auto& m : masks) codes.push_back(encode_mask(d, m.values(), d.lambda()));
    try {
      const Normalizer n = fit_normalizer(codes);
      d.set_normalizer(n.mean, n.sigma);
    } catch (const ValidationError& e) {
      if (progress) progress("label " + std::to_string(k) + ": " + e.what() + ", skipped");
      continue;
    }
    if (progress) {
      std::string line = "label " + std::to_string(k) + ": " + std::to_string(masks.size()) + " masks";
      char buf[64];
      if (!report.objective.empty()) {
        std::snprintf(buf, sizeof buf, ", objective %.6g -> %.6g", report.initial_objective, report.objective.back());
        line += buf;
      }
      progress(line);
    }
    set.labels[static_cast<std::size_t>(k)] = std::move(d);
  }
  return set;
}

ShapeNormalizer fit_shape_normalizer(const std::vector<Sample>& crops, int num_labels) {
  std::vector<std::vector<std::optional<Box>>> boxes;
  boxes.reserve(crops.size());
  for (const Sample& s : crops) boxes.push_back(label_boxes(s.labels, num_labels));
  return fit_shape_normalizer(boxes, num_labels);
}

TargetSets make_target_sets(const std::vector<Sample>& crops, const DictionarySet& dicts, const ShapeNormalizer& shapes) {
  TargetSets out;
  for (const Sample& s : crops) {
    const TrainingTarget t = make_training_targets(s, dicts, shapes);
    nn::Tensor input = to_tensor(s.image);
    out.template_set.inputs.push_back(input);
    out.template_set.targets.push_back(t.template_tensor(dicts.atoms));
    out.shape_set.inputs.push_back(std::move(input));
    out.shape_set.targets.push_back(t.shape_tensor());
  }
  return out;
}

ParseModels train_models(const std::vector<Sample>& samples, const LabelPalette& palette,
                         const DeskTrainingConfig& config, const Progress& progress) {
  const int k = config.num_labels;
  const std::vector<Sample> crops = augment_all(samples, palette, kDeskInputSize);
  if (crops.empty()) throw ValidationError("no trainable samples (all label maps empty)");
  if (progress) progress("augmented samples: " + std::to_string(crops.size()));
  DictionaryLearnConfig dc = config.dict;
  dc.seed = config.seed;
  DictionarySet dicts = learn_dictionary_set(crops, k, config.rw, config.rh, dc, progress);
  ShapeNormalizer shapes = fit_shape_normalizer(crops, k);
  TargetSets sets = make_target_sets(crops, dicts, shapes);

  auto report = [&](const char* which) {
    return [&progress, which](const EpochRecord& r) {
      if (!progress) return;
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s epoch %d loss %.6g lr %.3g", which, r.epoch, r.loss, r.lr);
      progress(buf);
    };
  };
  nn::RegressionNet template_net = build_template_net(Scale::desk, k, dicts.atoms, config.seed);
  TrainConfig tc = config.template_train;
  tc.seed = config.seed;
  train(template_net, sets.template_set, tc, nullptr, report("template"));
  sets.template_set = {};
  nn::RegressionNet shape_net = build_shape_net(Scale::desk, k, config.seed + 1);
  TrainConfig sc = config.shape_train;
  sc.seed = config.seed + 1;
  train(shape_net, sets.shape_set, sc, nullptr, report("shape"));
  BoxRefiner refiner = fit_refiner(shape_net, shapes, samples, k);
  return {std::move(dicts), std::move(template_net), std::move(shape_net), std::move(shapes), std::move(refiner)};
}

}  // namespace atr
