#include "atr/regression.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "atr/error.hpp"

namespace atr {

using nn::LayerSpec;

std::string_view to_string(Scale scale) { return scale == Scale::paper ? "paper" : "desk"; }

Scale parse_scale(std::string_view name) {
  if (name == "paper") return Scale::paper;
  if (name == "desk") return Scale::desk;
  throw ValidationError("unknown scale '" + std::string(name) + "' (expected paper or desk)");
}

int input_size(Scale scale) { return scale == Scale::paper ? kPaperInputSize : kDeskInputSize; }

nn::NetSpec template_net_spec(Scale scale, int num_labels, int atoms) {
  if (num_labels < 1 || atoms < 1) throw ValidationError("label and template counts must be >= 1");
  const int head = num_labels * atoms;
  if (scale == Scale::paper)
    return {{3, kPaperInputSize, kPaperInputSize},
            {LayerSpec::conv(96, 7, 2, 0), LayerSpec::relu(), LayerSpec::maxpool(3, 2), LayerSpec::contrast_norm(),
             LayerSpec::conv(256, 5, 2, 2), LayerSpec::relu(), LayerSpec::maxpool(3, 2), LayerSpec::contrast_norm(),
             LayerSpec::conv(384, 3, 1, 1), LayerSpec::relu(), LayerSpec::conv(384, 3, 1, 1), LayerSpec::relu(),
             LayerSpec::conv(256, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(3, 2),
             LayerSpec::fully_connected(4096), LayerSpec::relu(), LayerSpec::fully_connected(4096), LayerSpec::relu(),
             LayerSpec::fully_connected(head)}};
  return {{3, kDeskInputSize, kDeskInputSize},
          {LayerSpec::conv(16, 5, 2), LayerSpec::relu(), LayerSpec::maxpool(3, 2), LayerSpec::contrast_norm(),
           LayerSpec::conv(32, 3, 2), LayerSpec::relu(), LayerSpec::contrast_norm(), LayerSpec::fully_connected(256),
           LayerSpec::relu(), LayerSpec::fully_connected(head)}};
}

nn::NetSpec shape_net_spec(Scale scale, int num_labels) {
  if (num_labels < 1) throw ValidationError("label count must be >= 1");
  const int head = 5 * num_labels;
  if (scale == Scale::paper)
    return {{3, kPaperInputSize, kPaperInputSize},
            {LayerSpec::conv(48, 7, 2, 0), LayerSpec::relu(), LayerSpec::conv(128, 5, 2, 2), LayerSpec::relu(),
             LayerSpec::conv(192, 3, 2, 1), LayerSpec::relu(), LayerSpec::conv(192, 3, 2, 1), LayerSpec::relu(),
             LayerSpec::conv(128, 3, 1, 1), LayerSpec::relu(), LayerSpec::fully_connected(2048), LayerSpec::relu(),
             LayerSpec::fully_connected(1024), LayerSpec::relu(), LayerSpec::fully_connected(head)}};
  return {{3, kDeskInputSize, kDeskInputSize},
          {LayerSpec::conv(16, 5, 2), LayerSpec::relu(), LayerSpec::conv(32, 3, 2), LayerSpec::relu(),
           LayerSpec::conv(32, 3, 2), LayerSpec::relu(), LayerSpec::fully_connected(128), LayerSpec::relu(),
           LayerSpec::fully_connected(head)}};
}

nn::RegressionNet build_template_net(Scale scale, int num_labels, int atoms, std::uint64_t seed) {
  return {template_net_spec(scale, num_labels, atoms), seed};
}

nn::RegressionNet build_shape_net(Scale scale, int num_labels, std::uint64_t seed) {
  return {shape_net_spec(scale, num_labels), seed};
}

ShapeNormalizer fit_shape_normalizer(const std::vector<std::vector<std::optional<Box>>>& boxes, int num_labels) {
  if (num_labels < 1) throw ValidationError("label count must be >= 1");
  ShapeNormalizer n{num_labels, std::vector<std::array<float, 4>>(static_cast<std::size_t>(num_labels) + 1),
                    std::vector<std::array<float, 4>>(static_cast<std::size_t>(num_labels) + 1)};
  for (int k = 1; k <= num_labels; ++k) {
    std::array<double, 4> sum{}, sq{};
    std::size_t count = 0;
    for (const auto& sample : boxes) {
      if (static_cast<int>(sample.size()) <= k || !sample[static_cast<std::size_t>(k)]) continue;
      const Box& b = *sample[static_cast<std::size_t>(k)];
      const std::array<double, 4> v{b.x, b.y, b.w, b.h};
      for (int c = 0; c < 4; ++c) sum[c] += v[c];
      ++count;
    }
    auto& mean = n.mean[static_cast<std::size_t>(k)];
    auto& dev = n.stddev[static_cast<std::size_t>(k)];
    for (int c = 0; c < 4; ++c) mean[c] = count ? static_cast<float>(sum[c] / count) : 0.0f;
    for (const auto& sample : boxes) {
      if (static_cast<int>(sample.size()) <= k || !sample[static_cast<std::size_t>(k)]) continue;
      const Box& b = *sample[static_cast<std::size_t>(k)];
      const std::array<double, 4> v{b.x, b.y, b.w, b.h};
      for (int c = 0; c < 4; ++c) sq[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
    }
    for (int c = 0; c < 4; ++c) {
      const double s = count >= 2 ? std::sqrt(sq[c] / count) : 0.0;
      dev[c] = s > 1e-6 ? static_cast<float>(s) : 1.0f;
    }
  }
  return n;
}

namespace {

void check_label(const ShapeNormalizer& n, int label) {
  if (!n.fitted()) throw ValidationError("shape normalizer not fitted");
  if (label < 1 || label > n.num_labels) throw ValidationError("label " + std::to_string(label) + " out of range");
}

}  // namespace

ShapeParams normalize(const ShapeNormalizer& n, int label, const ShapeParams& raw) {
  check_label(n, label);
  if (raw.space != ShapeSpace::raw) throw ValidationError("shape parameters already normalized");
  const auto& m = n.mean[static_cast<std::size_t>(label)];
  const auto& s = n.stddev[static_cast<std::size_t>(label)];
  return {(raw.x - m[0]) / s[0], (raw.y - m[1]) / s[1], (raw.w - m[2]) / s[2], (raw.h - m[3]) / s[3], raw.v,
          ShapeSpace::normalized};
}

ShapeParams denormalize(const ShapeNormalizer& n, int label, const ShapeParams& z) {
  check_label(n, label);
  if (z.space != ShapeSpace::normalized) throw ValidationError("shape parameters are not normalized");
  const auto& m = n.mean[static_cast<std::size_t>(label)];
  const auto& s = n.stddev[static_cast<std::size_t>(label)];
  return {m[0] + s[0] * z.x, m[1] + s[1] * z.y, m[2] + s[2] * z.w, m[3] + s[3] * z.h, z.v, ShapeSpace::raw};
}

std::vector<nn::CheckpointExtra> to_extras(const ShapeNormalizer& n) {
  nn::CheckpointExtra mean{"shape_mean", {}}, dev{"shape_std", {}};
  for (int k = 1; k <= n.num_labels; ++k)
    for (int c = 0; c < 4; ++c) {
      mean.values.push_back(n.mean[static_cast<std::size_t>(k)][c]);
      dev.values.push_back(n.stddev[static_cast<std::size_t>(k)][c]);
    }
  return {mean, dev};
}

ShapeNormalizer shape_normalizer_from(const nn::Checkpoint& ck) {
  const auto* mean = ck.find("shape_mean");
  const auto* dev = ck.find("shape_std");
  if (!mean || !dev) throw ValidationError("checkpoint has no shape normalizer");
  if (mean->values.size() != dev->values.size() || mean->values.empty() || mean->values.size() % 4 != 0)
    throw ValidationError("malformed shape normalizer in checkpoint");
  const int k = static_cast<int>(mean->values.size() / 4);
  ShapeNormalizer n{k, std::vector<std::array<float, 4>>(static_cast<std::size_t>(k) + 1),
                    std::vector<std::array<float, 4>>(static_cast<std::size_t>(k) + 1)};
  for (int l = 1; l <= k; ++l)
    for (int c = 0; c < 4; ++c) {
      n.mean[static_cast<std::size_t>(l)][c] = mean->values[static_cast<std::size_t>((l - 1) * 4 + c)];
      n.stddev[static_cast<std::size_t>(l)][c] = dev->values[static_cast<std::size_t>((l - 1) * 4 + c)];
    }
  return n;
}

std::vector<std::optional<Box>> label_boxes(const LabelMap& labels, int num_labels) {
  const auto masks = extract_label_masks(labels, num_labels);
  std::vector<std::optional<Box>> out(masks.size());
  for (std::size_t k = 1; k < masks.size(); ++k)
    if (masks[k]) {
      const Rect& r = masks[k]->box;
      out[k] = Box{double(r.x), double(r.y), double(r.w), double(r.h)};
    }
  return out;
}

nn::Tensor TrainingTarget::template_tensor(int atoms) const {
  const int k = static_cast<int>(coefficients.size()) - 1;
  nn::Tensor t = nn::Tensor::flat(static_cast<std::size_t>(k) * atoms);
  for (int l = 1; l <= k; ++l) {
    const auto& v = coefficients[static_cast<std::size_t>(l)].values;
    if (static_cast<int>(v.size()) != atoms) throw ValidationError("coefficient length differs from M");
    std::copy(v.begin(), v.end(), t.data() + static_cast<std::size_t>(l - 1) * atoms);
  }
  return t;
}

nn::Tensor TrainingTarget::shape_tensor() const {
  const int k = static_cast<int>(shapes.size()) - 1;
  nn::Tensor t = nn::Tensor::flat(static_cast<std::size_t>(k) * 5);
  for (int l = 1; l <= k; ++l) {
    const ShapeParams& s = shapes[static_cast<std::size_t>(l)];
    float* dst = t.data() + static_cast<std::size_t>(l - 1) * 5;
    dst[0] = static_cast<float>(s.x);
    dst[1] = static_cast<float>(s.y);
    dst[2] = static_cast<float>(s.w);
    dst[3] = static_cast<float>(s.h);
    dst[4] = static_cast<float>(s.v);
  }
  return t;
}

TrainingTarget make_training_targets(const Sample& sample, const DictionarySet& dicts, const ShapeNormalizer& shapes) {
  if (!shapes.fitted()) throw ValidationError("shape normalizer not fitted");
  const int k = dicts.num_labels;
  if (shapes.num_labels != k) throw ValidationError("dictionary and shape normalizer label counts differ");
  const auto masks = extract_label_masks(sample.labels, k);
  TrainingTarget t;
  t.present.assign(static_cast<std::size_t>(k) + 1, false);
  t.coefficients.resize(static_cast<std::size_t>(k) + 1);
  t.shapes.resize(static_cast<std::size_t>(k) + 1);
  for (int l = 1; l <= k; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Coefficients zero{l, std::vector<float>(static_cast<std::size_t>(dicts.atoms), 0.0f), CoefficientSpace::normalized};
    t.coefficients[li] = zero;
    t.shapes[li] = {0, 0, 0, 0, 0, ShapeSpace::normalized};
    if (!masks[li]) continue;
    t.present[li] = true;
    if (const TemplateDictionary* d = dicts.find(l)) {
      if (!d->has_normalizer()) throw ValidationError("label " + std::to_string(l) + ": coefficient normalizer not fitted");
      const FloatMap m = resize_mask(*masks[li], d->rw(), d->rh());
      t.coefficients[li] = normalize(*d, encode_mask(*d, m.values(), d->lambda()));
    }
    const Rect& r = masks[li]->box;
    t.shapes[li] = normalize(shapes, l, {double(r.x), double(r.y), double(r.w), double(r.h), 1.0, ShapeSpace::raw});
  }
  return t;
}

double mean_loss(const nn::RegressionNet& net, const TrainingSet& data) {
  if (data.inputs.empty() || data.inputs.size() != data.targets.size())
    throw ValidationError("training set needs matching, non-empty inputs and targets");
  double total = 0.0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i)
    total += nn::l2_loss(net.infer(data.inputs[i]), data.targets[i]).loss;
  return total / static_cast<double>(data.inputs.size());
}

std::vector<EpochRecord> train(nn::RegressionNet& net, const TrainingSet& data, const TrainConfig& config,
                               const TrainingSet* validation,
                               const std::function<void(const EpochRecord&)>& on_epoch) {
  const std::size_t n = data.inputs.size();
  if (n == 0 || data.targets.size() != n) throw ValidationError("training set needs matching, non-empty inputs and targets");
  if (config.batch < 1 || config.epochs < 0 || !(config.lr >= 0)) throw ValidationError("invalid training hyperparameters");
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> losses(n, 0.0);
  std::vector<EpochRecord> records;
  double lr = config.lr;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch));
      auto grads = net.zero_gradients();
      for (std::size_t t = start; t < stop; ++t) {
        const std::size_t i = order[t];
        const auto result = nn::l2_loss(net.forward(data.inputs[i]), data.targets[i]);
        if (!std::isfinite(result.loss))
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                 std::to_string(step + 1) + ", sample " + std::to_string(i));
        losses[i] = result.loss;
        net.backward(result.gradient, grads);
      }
      grads.scale(1.0f / static_cast<float>(stop - start));
      try {
        net.sgd_step(grads, lr, config.sgd);
      } catch (const ValidationError& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + ", step " +
                               std::to_string(step + 1));
      }
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    for (double l : losses) rec.loss += l;
    rec.loss /= static_cast<double>(n);
    rec.validation_loss = validation ? mean_loss(net, *validation) : rec.loss;
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.validation_loss < best * (1.0 - config.plateau_threshold)) {
      best = rec.validation_loss;
      stale = 0;
    } else if (++stale >= config.patience) {
      lr *= config.lr_factor;
      stale = 0;
    }
  }
  return records;
}

StructurePrediction predict_structure(const nn::RegressionNet& template_net, const nn::RegressionNet& shape_net,
                                      const DictionarySet& dicts, const ShapeNormalizer& shapes,
                                      const nn::Tensor& input) {
  const int k = dicts.num_labels, m = dicts.atoms;
  if (template_net.spec().head_width() != k * m)
    throw ValidationError("template net head width " + std::to_string(template_net.spec().head_width()) +
                          " != K*M = " + std::to_string(k * m));
  if (shape_net.spec().head_width() != 5 * k)
    throw ValidationError("shape net head width " + std::to_string(shape_net.spec().head_width()) +
                          " != 5K = " + std::to_string(5 * k));
  if (shapes.num_labels != k) throw ValidationError("shape normalizer label count differs from dictionaries");
  const nn::Tensor coeff = template_net.infer(input);
  const nn::Tensor shape = shape_net.infer(input);
  StructurePrediction out;
  out.coefficients.resize(static_cast<std::size_t>(k) + 1);
  out.shapes.resize(static_cast<std::size_t>(k) + 1);
  for (int l = 1; l <= k; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Coefficients raw{l, std::vector<float>(static_cast<std::size_t>(m), 0.0f), CoefficientSpace::raw};
    const TemplateDictionary* d = dicts.find(l);
    if (d && d->has_normalizer()) {
      Coefficients z{l, std::vector<float>(coeff.data() + (l - 1) * m, coeff.data() + l * m), CoefficientSpace::normalized};
      raw = denormalize(*d, z);
      if (d->variant() != DictionaryVariant::pca)
        for (auto& v : raw.values) v = std::max(0.0f, v);
    }
    out.coefficients[li] = std::move(raw);
    const float* s = shape.data() + (l - 1) * 5;
    ShapeParams p = denormalize(shapes, l, {s[0], s[1], s[2], s[3], s[4], ShapeSpace::normalized});
    p.w = std::max(0.0, p.w);
    p.h = std::max(0.0, p.h);
    p.v = std::clamp(p.v, 0.0, 1.0);
    out.shapes[li] = p;
  }
  return out;
}

std::vector<float> penultimate_features(const nn::RegressionNet& net, const nn::Tensor& input) {
  const int last = static_cast<int>(net.spec().layers.size()) - 2;
  if (last < 0) throw ValidationError("net has no layer before its head");
  return net.infer(input, last).storage();
}

std::array<double, 4> box_transform(const Box& p, const Box& g) {
  if (!(p.w > 0 && p.h > 0 && g.w > 0 && g.h > 0)) throw ValidationError("box transform needs positive extents");
  return {(g.x - p.x) / p.w, (g.y - p.y) / p.h, std::log(g.w / p.w), std::log(g.h / p.h)};
}

Box apply_transform(const Box& b, const std::array<double, 4>& t) {
  return {b.x + b.w * t[0], b.y + b.h * t[1], b.w * std::exp(t[2]), b.h * std::exp(t[3])};
}

BoxRefiner::BoxRefiner(int num_labels, int feature_size)
    : num_labels_(num_labels), feature_size_(feature_size), models_(static_cast<std::size_t>(num_labels) + 1) {
  if (num_labels < 1 || feature_size < 0) throw ValidationError("invalid refiner dimensions");
}

bool BoxRefiner::is_identity(int label) const {
  return label < 1 || label > num_labels_ || models_[static_cast<std::size_t>(label)].size() == 0;
}

const Eigen::MatrixXf& BoxRefiner::weights(int label) const {
  if (label < 1 || label > num_labels_) throw ValidationError("label " + std::to_string(label) + " out of range");
  return models_[static_cast<std::size_t>(label)];
}

void BoxRefiner::set_weights(int label, Eigen::MatrixXf w) {
  if (label < 1 || label > num_labels_) throw ValidationError("label " + std::to_string(label) + " out of range");
  if (w.size() != 0 && (w.rows() != feature_size_ + 1 || w.cols() != 4))
    throw ValidationError("refiner weights must be (F+1) x 4");
  models_[static_cast<std::size_t>(label)] = std::move(w);
}

Box BoxRefiner::refine(int label, std::span<const float> features, const Box& box, double width, double height) const {
  Box out = box;
  if (!is_identity(label)) {
    if (static_cast<int>(features.size()) != feature_size_)
      throw ValidationError("refiner expects " + std::to_string(feature_size_) + " features");
    const Eigen::MatrixXf& w = models_[static_cast<std::size_t>(label)];
    Eigen::VectorXf f(feature_size_ + 1);
    for (int i = 0; i < feature_size_; ++i) f(i) = features[static_cast<std::size_t>(i)];
    f(feature_size_) = 1.0f;
    const Eigen::VectorXf t = w.transpose() * f;
    out = apply_transform(box, {t(0), t(1), t(2), t(3)});
  }
  const double x0 = std::clamp(out.x, 0.0, width), x1 = std::clamp(out.x + out.w, 0.0, width);
  const double y0 = std::clamp(out.y, 0.0, height), y1 = std::clamp(out.y + out.h, 0.0, height);
  return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
}

BoxRefiner fit_box_refiners(const std::vector<std::vector<RefinerSample>>& samples, int num_labels, int feature_size,
                            double ridge) {
  BoxRefiner r(num_labels, feature_size);
  for (int l = 1; l <= num_labels && l < static_cast<int>(samples.size()); ++l) {
    std::vector<const RefinerSample*> keep;
    for (const auto& s : samples[static_cast<std::size_t>(l)]) {
      if (static_cast<int>(s.features.size()) != feature_size) throw ValidationError("refiner feature size mismatch");
      if (s.predicted.w > 0 && s.predicted.h > 0 && s.truth.w > 0 && s.truth.h > 0 &&
          intersection_over_union(s.predicted, s.truth) >= kRefineMinOverlap)
        keep.push_back(&s);
    }
    if (keep.empty()) continue;
    const Eigen::Index f = feature_size + 1, n = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd x(n, f), y(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < feature_size; ++j) x(i, j) = keep[static_cast<std::size_t>(i)]->features[static_cast<std::size_t>(j)];
      x(i, feature_size) = 1.0;
      const auto t = box_transform(keep[static_cast<std::size_t>(i)]->predicted, keep[static_cast<std::size_t>(i)]->truth);
      for (int c = 0; c < 4; ++c) y(i, c) = t[static_cast<std::size_t>(c)];
    }
    Eigen::MatrixXd a = x.transpose() * x;
    a.diagonal().head(feature_size).array() += ridge * static_cast<double>(n);
    a(feature_size, feature_size) += 1e-12;
    const Eigen::MatrixXd w = a.ldlt().solve(x.transpose() * y);
    r.set_weights(l, w.cast<float>());
  }
  return r;
}

Box refine_box(const BoxRefiner& refiner, int label, std::span<const float> features, const Box& box, double width,
               double height) {
  return refiner.refine(label, features, box, width, height);
}

std::vector<nn::CheckpointExtra> to_extras(const BoxRefiner& r) {
  std::vector<nn::CheckpointExtra> out;
  for (int l = 1; l <= r.num_labels(); ++l) {
    if (r.is_identity(l)) continue;
    const Eigen::MatrixXf& w = r.weights(l);
    out.push_back({"refiner_" + std::to_string(l), std::vector<float>(w.data(), w.data() + w.size())});
  }
  return out;
}

BoxRefiner box_refiner_from(const nn::Checkpoint& ck, int num_labels) {
  const auto& dims = ck.net.dims();
  if (dims.size() < 2) throw ValidationError("shape net too short for refinement features");
  const int f = static_cast<int>(dims[dims.size() - 2].size());
  BoxRefiner r(num_labels, f);
  for (int l = 1; l <= num_labels; ++l) {
    const auto* e = ck.find("refiner_" + std::to_string(l));
    if (!e) continue;
    if (static_cast<int>(e->values.size()) != (f + 1) * 4) throw ValidationError("malformed refiner block for label " + std::to_string(l));
    r.set_weights(l, Eigen::Map<const Eigen::MatrixXf>(e->values.data(), f + 1, 4));
  }
  return r;
}

}  // namespace atr
