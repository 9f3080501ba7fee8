#pragma once

#include <functional>
#include <string>
#include <vector>

#include "atr/pipeline.hpp"

namespace atr {

// Person crops used for learning: each sample's 24 augmented variants.
std::vector<Sample> augment_all(const std::vector<Sample>& samples, const LabelPalette& palette,
                                int size = kDeskInputSize);

// Every present instance of `label`, cropped to its box and resized to rw x rh.
std::vector<FloatMap> collect_masks(const std::vector<Sample>& crops, int label, int num_labels, int rw, int rh);

using Progress = std::function<void(const std::string&)>;

// Learns one dictionary per label (labels with fewer than two instances
// are left out) and fits each coefficient normalizer on the encoded masks.
DictionarySet learn_dictionary_set(const std::vector<Sample>& crops, int num_labels, int rw, int rh,
                                   const DictionaryLearnConfig& config, const Progress& progress = {});

ShapeNormalizer fit_shape_normalizer(const std::vector<Sample>& crops, int num_labels);

struct TargetSets {
  TrainingSet template_set;
  TrainingSet shape_set;
};

TargetSets make_target_sets(const std::vector<Sample>& crops, const DictionarySet& dicts,
                            const ShapeNormalizer& shapes);

struct DeskTrainingConfig {
  int num_labels = kNumLabels;
  int rw = 32;
  int rh = 32;
  DictionaryLearnConfig dict{16, 0.001, DictionaryVariant::nmf_l2, 10, 256, 0};
  TrainConfig template_train{0.01, 32, 30, {}, 5, 1e-4, 0.1, 0};
  TrainConfig shape_train{0.01, 32, 30, {}, 5, 1e-4, 0.1, 0};
  std::uint64_t seed = 0;
};

// Full learning chain on raw frames: augment, dictionaries, normalizers,
// both nets and the box refiner.
ParseModels train_models(const std::vector<Sample>& samples, const LabelPalette& palette,
                         const DeskTrainingConfig& config, const Progress& progress = {});

}  // namespace atr
