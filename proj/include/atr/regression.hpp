#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "atr/checkpoint.hpp"
#include "atr/dataset.hpp"
#include "atr/mask_dictionary.hpp"
#include "atr/net.hpp"

namespace atr {

enum class Scale { paper, desk };

std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view name);

inline constexpr int kPaperInputSize = 227;

enum class ShapeSpace { raw, normalized };

// Top-left corner, extent and visibility of one label.
struct ShapeParams {
  double x = 0, y = 0, w = 0, h = 0, v = 0;
  ShapeSpace space = ShapeSpace::raw;

  [[nodiscard]] Box box() const { return {x, y, w, h}; }
};

int input_size(Scale scale);

// paper: the 227 px chains of the two figures; desk: 64 px nets.
nn::NetSpec template_net_spec(Scale scale, int num_labels, int atoms);
nn::NetSpec shape_net_spec(Scale scale, int num_labels);
nn::RegressionNet build_template_net(Scale scale, int num_labels, int atoms, std::uint64_t seed = 0);
nn::RegressionNet build_shape_net(Scale scale, int num_labels, std::uint64_t seed = 0);

// Per-label, per-component (x, y, w, h) mean and deviation of ground-truth
// boxes; visibility is never normalized. Entry 0 is unused.
struct ShapeNormalizer {
  int num_labels = 0;
  std::vector<std::array<float, 4>> mean;
  std::vector<std::array<float, 4>> stddev;

  [[nodiscard]] bool fitted() const { return num_labels > 0; }
};

// boxes[i][k] is label k's box in sample i, if present. Components with no
// spread (or labels seen fewer than twice) get deviation 1.
ShapeNormalizer fit_shape_normalizer(const std::vector<std::vector<std::optional<Box>>>& boxes, int num_labels);
ShapeParams normalize(const ShapeNormalizer& normalizer, int label, const ShapeParams& raw);
ShapeParams denormalize(const ShapeNormalizer& normalizer, int label, const ShapeParams& normalized);

std::vector<nn::CheckpointExtra> to_extras(const ShapeNormalizer& normalizer);
ShapeNormalizer shape_normalizer_from(const nn::Checkpoint& checkpoint);

// Boxes of every label in a label map (tight bounding rectangles).
std::vector<std::optional<Box>> label_boxes(const LabelMap& labels, int num_labels);

// Per-label regression targets in the networks' normalized output space.
// Absent labels carry all-zero coefficients and shape with v = 0.
struct TrainingTarget {
  std::vector<Coefficients> coefficients;  // index 1..K
  std::vector<ShapeParams> shapes;         // index 1..K
  std::vector<bool> present;               // index 0..K

  [[nodiscard]] nn::Tensor template_tensor(int atoms) const;  // K*M
  [[nodiscard]] nn::Tensor shape_tensor() const;              // 5K
};

TrainingTarget make_training_targets(const Sample& sample, const DictionarySet& dicts,
                                     const ShapeNormalizer& shapes);

struct TrainConfig {
  double lr = 0.0005;
  int batch = 128;
  int epochs = 50;
  nn::SgdConfig sgd;
  int patience = 5;
  double plateau_threshold = 1e-4;
  double lr_factor = 0.1;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;             // mean per-sample training loss during the epoch
  double validation_loss = 0.0;  // equals loss when no validation set is given
  double lr = 0.0;
};

struct TrainingSet {
  std::vector<nn::Tensor> inputs;
  std::vector<nn::Tensor> targets;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mini-batch SGD on the summed l2 loss (gradient averaged over the batch),
// with the learning rate divided by 10 after `patience` epochs without a
// relative improvement of the monitored loss. Throws TrainingDiverged on a
// non-finite loss.
std::vector<EpochRecord> train(nn::RegressionNet& net, const TrainingSet& data, const TrainConfig& config,
                               const TrainingSet* validation = nullptr,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

// Mean per-sample loss over a set, summed in index order.
double mean_loss(const nn::RegressionNet& net, const TrainingSet& data);

struct StructurePrediction {
  std::vector<Coefficients> coefficients;  // raw, index 1..K
  std::vector<ShapeParams> shapes;         // raw, network input coordinates
};

// Both nets on one network-sized input; coefficients are denormalized and
// clamped at 0 (nmf), boxes denormalized with w, h >= 0, v clamped to [0, 1].
StructurePrediction predict_structure(const nn::RegressionNet& template_net, const nn::RegressionNet& shape_net,
                                      const DictionarySet& dicts, const ShapeNormalizer& shapes,
                                      const nn::Tensor& input);

// Activation of the layer right before the head.
std::vector<float> penultimate_features(const nn::RegressionNet& net, const nn::Tensor& input);

// (t_x, t_y, t_w, t_h) taking `predicted` to `truth`.
std::array<double, 4> box_transform(const Box& predicted, const Box& truth);
Box apply_transform(const Box& box, const std::array<double, 4>& t);

struct RefinerSample {
  std::vector<float> features;
  Box predicted;
  Box truth;
};

inline constexpr double kRefineMinOverlap = 0.5;
inline constexpr double kRefineEnlarge = 1.5;

// Per-label linear maps from [features, 1] to the four transform targets.
class BoxRefiner {
 public:
  BoxRefiner() = default;
  BoxRefiner(int num_labels, int feature_size);

  [[nodiscard]] int num_labels() const { return num_labels_; }
  [[nodiscard]] int feature_size() const { return feature_size_; }
  [[nodiscard]] bool is_identity(int label) const;
  [[nodiscard]] const Eigen::MatrixXf& weights(int label) const;
  void set_weights(int label, Eigen::MatrixXf weights);  // (F+1) x 4

  // Transform predicted from the features, applied and clamped to the frame.
  [[nodiscard]] Box refine(int label, std::span<const float> features, const Box& box, double width,
                           double height) const;

 private:
  int num_labels_ = 0;
  int feature_size_ = 0;
  std::vector<Eigen::MatrixXf> models_;  // empty matrix = identity
};

// Ridge least squares per label on pairs with IoU >= 0.5; labels without a
// qualifying pair stay identity.
BoxRefiner fit_box_refiners(const std::vector<std::vector<RefinerSample>>& samples, int num_labels,
                            int feature_size, double ridge = 1e-3);
Box refine_box(const BoxRefiner& refiner, int label, std::span<const float> features, const Box& box,
               double width, double height);

std::vector<nn::CheckpointExtra> to_extras(const BoxRefiner& refiner);
BoxRefiner box_refiner_from(const nn::Checkpoint& checkpoint, int num_labels);

}  // namespace atr
