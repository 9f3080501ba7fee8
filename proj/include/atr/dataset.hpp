#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atr/image.hpp"

namespace atr {

inline constexpr int kNumLabels = 17;

// Label names in index order (0 = background) with left/right partners.
class LabelPalette {
 public:
  explicit LabelPalette(std::vector<std::string> names);

  // background, face, sunglass, hat, scarf, hair, upper-clothes, left-arm,
  // right-arm, belt, pants, left-leg, right-leg, skirt, left-shoe, right-shoe,
  // bag, dress.
  static LabelPalette standard();

  [[nodiscard]] int num_labels() const { return static_cast<int>(names_.size()) - 1; }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
  [[nodiscard]] const std::string& name(int label) const { return names_.at(static_cast<std::size_t>(label)); }
  // Partner index for left-X / right-X names, the label itself otherwise.
  [[nodiscard]] int partner(int label) const { return partner_.at(static_cast<std::size_t>(label)); }
  [[nodiscard]] Rgb color(int label) const;

  void save(const std::filesystem::path& path) const;
  static LabelPalette load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::vector<int> partner_;
};

struct Sample {
  RgbImage image;
  LabelMap labels;
  std::optional<Box> person;
};

// Throws ValidationError on dims mismatch or a label above num_labels.
void validate_sample(const Sample& sample, int num_labels);

Sample load_sample(const std::filesystem::path& image_path, const std::filesystem::path& labels_path,
                   int num_labels = kNumLabels);
void save_label_map(const LabelMap& labels, const std::filesystem::path& path);

// Tight box around every non-background pixel, nullopt for an empty map.
std::optional<Box> foreground_box(const LabelMap& labels);

// Box scaled by `factor` about its center, rounded outward to pixels and
// clipped to the frame.
Rect enlarged_region(const Box& box, double factor, int width, int height);

struct PersonCrop {
  Sample sample;  // resized to the network input, person box in crop coordinates
  Rect region;    // source rectangle in the original frame
};

inline constexpr double kPersonEnlarge = 1.2;
inline constexpr int kDeskInputSize = 64;

// Crops `region` (already clipped) and resizes image and labels by nearest
// neighbour to out_w x out_h. The person box, when set, is mapped along.
PersonCrop crop_region(const Sample& sample, const Rect& region, int out_w, int out_h);
PersonCrop crop_person(const Sample& sample, const Box& box, double enlarge = kPersonEnlarge,
                       int out_w = kDeskInputSize, int out_h = kDeskInputSize);

// Mirror image and labels and swap left/right partners.
Sample reflect(const Sample& sample, const LabelPalette& palette);

inline constexpr int kAugmentShift = 20;
inline constexpr std::array<double, 3> kAugmentScales{1.2, 1.5, 1.8};
inline constexpr int kAugmentCount = 24;

// Original box, eight 20 px shifts and three enlargements, each cropped to
// out_w x out_h and paired with its reflection: 24 samples. Requires the
// person box.
std::vector<Sample> augment(const Sample& sample, const LabelPalette& palette,
                            int out_w = kDeskInputSize, int out_h = kDeskInputSize);

struct Dataset {
  LabelPalette palette = LabelPalette::standard();
  std::vector<std::string> names;  // file stem per sample
  std::vector<Sample> samples;
};

// images/NNN.png, labels/NNN.png, palette.txt and boxes.txt ("NNN x y w h").
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SynthConfig {
  int width = 96;
  int height = 128;
  double p_hat = 0.3;
  double p_sunglass = 0.3;
  double p_scarf = 0.25;
  double p_hair = 0.9;
  double p_belt = 0.3;
  double p_bag = 0.35;
  double p_shoes = 0.85;
  double p_pants = 0.45;
  double p_skirt = 0.3;  // dress otherwise
};

// Probability that each label (index 0..17) appears in a generated map.
std::array<double, kNumLabels + 1> label_occurrence(const SynthConfig& config);

// Articulated figures drawn as ellipses, capsules and polygons over a
// textured background. Deterministic per seed.
std::vector<Sample> synth_generate(std::uint64_t seed, int count, const SynthConfig& config = {});

}  // namespace atr
