#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "atr/tensor.hpp"

namespace atr::nn {

enum class LayerKind { conv, relu, maxpool, contrast_norm, fully_connected };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int filters = 0;  // conv
  int kernel = 0;   // conv kernel or maxpool window
  int stride = 1;   // conv, maxpool
  int pad = 0;      // conv zero padding
  int units = 0;    // fully_connected

  static LayerSpec conv(int filters, int kernel, int stride, int pad = 0);
  static LayerSpec relu();
  static LayerSpec maxpool(int window, int stride);
  static LayerSpec contrast_norm();
  static LayerSpec fully_connected(int units);

  [[nodiscard]] bool has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::fully_connected;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Across-channel response normalization:
//   out_c = in_c / (1 + (alpha/size) * sum_{|c'-c| <= size/2} in_c'^2)^beta
inline constexpr int kNormSize = 5;
inline constexpr double kNormAlpha = 1e-4;
inline constexpr double kNormBeta = 0.75;

// floor((in + 2*pad - kernel) / stride) + 1 for conv/maxpool; throws ValidationError.
Dims output_dims(const LayerSpec& layer, Dims input);

struct NetSpec {
  Dims input;
  std::vector<LayerSpec> layers;

  // Output dims of every layer in order. Throws ValidationError naming the
  // offending layer index when the chain is inconsistent.
  [[nodiscard]] std::vector<Dims> chain() const;
  [[nodiscard]] int head_width() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] std::size_t count(LayerKind kind) const;
};

template <typename Real>
struct LayerParams {
  std::vector<Real> weights;
  std::vector<Real> bias;
};

template <typename Real>
struct BasicGradients {
  std::vector<LayerParams<Real>> layers;
  BasicTensor<Real> input;

  void zero();
  void scale(Real factor);
};

using Gradients = BasicGradients<float>;

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

// Ordered conv/relu/maxpool/contrast_norm/fully_connected stack ending in a
// fully-connected regressor head. forward() caches activations for backward();
// infer() is const and safe to call concurrently.
template <typename Real>
class BasicNet {
 public:
  BasicNet(NetSpec spec, std::uint64_t seed);

  [[nodiscard]] const NetSpec& spec() const { return spec_; }
  [[nodiscard]] const std::vector<Dims>& dims() const { return dims_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

  std::vector<LayerParams<Real>>& params() { return params_; }
  [[nodiscard]] const std::vector<LayerParams<Real>>& params() const { return params_; }

  BasicTensor<Real> forward(const BasicTensor<Real>& input);

  // Activation after layer `last_layer` (the head when negative).
  [[nodiscard]] BasicTensor<Real> infer(const BasicTensor<Real>& input, int last_layer = -1) const;

  BasicGradients<Real> backward(const BasicTensor<Real>& loss_gradient);
  void backward(const BasicTensor<Real>& loss_gradient, BasicGradients<Real>& accumulate);
  [[nodiscard]] BasicGradients<Real> zero_gradients() const;

  // v <- momentum*v - lr*(g + decay*w); w <- w + v.
  void sgd_step(const BasicGradients<Real>& gradients, double lr, const SgdConfig& config = {});
  void reset_momentum();

  // ReLU signs and max-pool argmax positions of the most recent forward pass.
  [[nodiscard]] std::vector<std::int64_t> activation_pattern() const;

  template <typename Other>
  [[nodiscard]] BasicNet<Other> cast() const;

  struct Trace;

 private:
  template <typename>
  friend class BasicNet;

  BasicTensor<Real> run(const BasicTensor<Real>& input, Trace* trace, int last_layer) const;

  NetSpec spec_;
  std::vector<Dims> dims_;
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;
  std::vector<LayerParams<Real>> params_;
  std::vector<LayerParams<Real>> momentum_;
  std::shared_ptr<Trace> trace_;
};

using RegressionNet = BasicNet<float>;

struct GradcheckOptions {
  double epsilon = 1e-3;
  // 0 checks every parameter; otherwise a deterministic sample per layer.
  std::size_t max_params_per_layer = 0;
  bool check_input = false;
  std::uint64_t sample_seed = 0;
};

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // perturbation crossed a ReLU kink or max-pool tie
  std::vector<double> per_layer;  // max error per parameterized layer (0 otherwise)
  double input_error = 0.0;
};

// Central-difference check of backward() on the l2 loss against `target`,
// evaluated in double precision on a copy of the net.
GradcheckReport gradcheck(const RegressionNet& net, const Tensor& image, const Tensor& target,
                          const GradcheckOptions& options = {});
GradcheckReport gradcheck(const BasicNet<double>& net, const BasicTensor<double>& image,
                          const BasicTensor<double>& target, const GradcheckOptions& options = {});

// One layer of `kind` followed by a small fully-connected head on a random
// double-precision input, checking parameters and the input gradient.
GradcheckReport gradcheck_layer_kind(LayerKind kind, std::uint64_t seed, double epsilon = 1e-3);

}  // namespace atr::nn
