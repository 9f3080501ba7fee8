#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "atr/image.hpp"

namespace atr {

// Tight crop of one label's pixels; `box` is the minimum bounding rectangle
// in source-image coordinates. Always holds at least one set pixel.
struct BinaryMask {
  BoolMask values;
  Rect box;
};

// Entry k holds label k's mask (entry 0, background, is always empty).
std::vector<std::optional<BinaryMask>> extract_label_masks(const LabelMap& labels, int num_labels);

// Bilinear resample to a fixed rw x rh grid with values in [0, 1].
FloatMap resize_mask(const BinaryMask& mask, int rw, int rh);

enum class DictionaryVariant { nmf_l2, nmf_l1, pca };

std::string_view to_string(DictionaryVariant variant);
DictionaryVariant parse_variant(std::string_view name);

enum class CoefficientSpace { raw, normalized };

struct Coefficients {
  int label = 0;
  std::vector<float> values;
  CoefficientSpace space = CoefficientSpace::raw;
};

// Per-label template basis D (Z x M, column = template) plus the coefficient
// normalizer (mean vector and scalar spread). For nmf variants every entry is
// non-negative and each column has l2 norm <= 1. For pca, column 0 is the
// mean mask (its coefficient is fixed to 1) and the rest are signed
// principal directions.
class TemplateDictionary {
 public:
  TemplateDictionary() = default;
  TemplateDictionary(int label, int rw, int rh, DictionaryVariant variant, double lambda,
                     Eigen::MatrixXf atoms);

  [[nodiscard]] int label() const { return label_; }
  [[nodiscard]] int atom_count() const { return static_cast<int>(atoms_.cols()); }
  [[nodiscard]] int atom_size() const { return static_cast<int>(atoms_.rows()); }
  [[nodiscard]] int rw() const { return rw_; }
  [[nodiscard]] int rh() const { return rh_; }
  [[nodiscard]] DictionaryVariant variant() const { return variant_; }
  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] const Eigen::MatrixXf& atoms() const { return atoms_; }
  [[nodiscard]] const Eigen::MatrixXd& gram() const { return gram_; }

  [[nodiscard]] bool has_normalizer() const { return sigma_ > 0; }
  [[nodiscard]] const std::vector<float>& mean() const { return mean_; }
  [[nodiscard]] float sigma() const { return sigma_; }
  void set_normalizer(std::vector<float> mean, float sigma);

 private:
  int label_ = 0;
  int rw_ = 0;
  int rh_ = 0;
  DictionaryVariant variant_ = DictionaryVariant::nmf_l2;
  double lambda_ = 0.0;
  Eigen::MatrixXf atoms_;
  Eigen::MatrixXd gram_;  // atoms^T atoms
  std::vector<float> mean_;
  float sigma_ = 0.0f;
};

struct DictionaryLearnConfig {
  int atoms = 50;
  double lambda = 0.001;
  DictionaryVariant variant = DictionaryVariant::nmf_l2;
  int epochs = 20;
  int batch = 64;
  std::uint64_t seed = 0;
};

struct DictionaryLearnReport {
  double initial_objective = 0.0;
  std::vector<double> objective;  // after each epoch
  // Per-pixel mean absolute residual of the final codes from learning.
  double mean_abs_residual = 0.0;
  bool invariants_held = true;    // non-negativity and column bound after every update
};

// Online dictionary learning: mini-batches of codes solved exactly with the
// dictionary fixed, followed by block coordinate descent on the templates
// using the running sufficient statistics of every sample's latest code.
TemplateDictionary learn_dictionary(int label, const std::vector<FloatMap>& masks,
                                    const DictionaryLearnConfig& config,
                                    DictionaryLearnReport* report = nullptr);

// Solver stopping rule for the coefficient subproblem.
inline constexpr double kEncodeTolerance = 1e-8;
inline constexpr int kEncodeMaxSweeps = 10000;

// argmin_{a >= 0} 1/2 |b - D a|^2 + lambda |a|^2 (|a|_1 for nmf_l1) by
// projected coordinate descent in fixed sweep order; projection for pca.
Coefficients encode_mask(const TemplateDictionary& dict, std::span<const float> mask, double lambda);

// 1/n sum_i (1/2 |b_i - D a_i|^2 + lambda * penalty(a_i)).
double dictionary_objective(const TemplateDictionary& dict, const std::vector<FloatMap>& masks,
                            const std::vector<Coefficients>& codes, double lambda);

struct Normalizer {
  std::vector<float> mean;
  float sigma = 0.0f;
};

// mean = average code; sigma = sqrt(mean |a - mean|^2), a single scalar.
Normalizer fit_normalizer(const std::vector<Coefficients>& codes);
Coefficients normalize(const TemplateDictionary& dict, const Coefficients& raw);
Coefficients denormalize(const TemplateDictionary& dict, const Coefficients& normalized);

// clamp(D a, 0, 1) as an rw x rh grid. Rejects normalized coefficients.
FloatMap reconstruct_mask(const TemplateDictionary& dict, const Coefficients& raw);

// All labels' dictionaries sharing K, M, rw, rh, variant and lambda.
struct DictionarySet {
  int num_labels = 0;
  int atoms = 0;
  int rw = 0;
  int rh = 0;
  DictionaryVariant variant = DictionaryVariant::nmf_l2;
  double lambda = 0.0;
  std::vector<std::optional<TemplateDictionary>> labels;  // index 1..K, entry 0 unused

  [[nodiscard]] const TemplateDictionary* find(int label) const;
};

void save_dictionaries(const DictionarySet& set, const std::filesystem::path& path);
DictionarySet load_dictionaries(const std::filesystem::path& path);

}  // namespace atr
