#include "atr/net.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>

#include "atr/error.hpp"

namespace atr::nn {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

std::string layer_error(std::size_t index, const std::string& what) {
  return "layer " + std::to_string(index) + ": " + what;
}

// Uniform in [0, 1) from the top 53 bits; platform independent.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Real>
void im2col(const BasicTensor<Real>& in, const LayerSpec& layer, Dims out, std::vector<Real>& cols) {
  const int c_in = in.dims().channels, h = in.dims().height, w = in.dims().width;
  const int k = layer.kernel, s = layer.stride, p = layer.pad;
  const int n_cols = out.height * out.width;
  cols.assign(static_cast<std::size_t>(c_in) * k * k * n_cols, Real(0));
  std::size_t row = 0;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        Real* dst = cols.data() + row * n_cols;
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) dst[oy * out.width + ox] = in.at(c, iy, ix);
          }
        }
      }
}

template <typename Real>
void col2im(const std::vector<Real>& cols, const LayerSpec& layer, Dims out, BasicTensor<Real>& din) {
  const int c_in = din.dims().channels, h = din.dims().height, w = din.dims().width;
  const int k = layer.kernel, s = layer.stride, p = layer.pad;
  const int n_cols = out.height * out.width;
  std::size_t row = 0;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        const Real* src = cols.data() + row * n_cols;
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) din.at(c, iy, ix) += src[oy * out.width + ox];
          }
        }
      }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::contrast_norm: return "contrast_norm";
    case LayerKind::fully_connected: return "fc";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "conv") return LayerKind::conv;
  if (name == "relu") return LayerKind::relu;
  if (name == "maxpool") return LayerKind::maxpool;
  if (name == "contrast_norm") return LayerKind::contrast_norm;
  if (name == "fc") return LayerKind::fully_connected;
  throw ValidationError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv(int filters, int kernel, int stride, int pad) {
  return {LayerKind::conv, filters, kernel, stride, pad, 0};
}
LayerSpec LayerSpec::relu() { return {LayerKind::relu, 0, 0, 1, 0, 0}; }
LayerSpec LayerSpec::maxpool(int window, int stride) {
  return {LayerKind::maxpool, 0, window, stride, 0, 0};
}
LayerSpec LayerSpec::contrast_norm() { return {LayerKind::contrast_norm, 0, 0, 1, 0, 0}; }
LayerSpec LayerSpec::fully_connected(int units) {
  return {LayerKind::fully_connected, 0, 0, 1, 0, units};
}

Dims output_dims(const LayerSpec& layer, Dims in) {
  if (in.channels < 1 || in.height < 1 || in.width < 1)
    throw ValidationError("empty input " + in.str());
  switch (layer.kind) {
    case LayerKind::relu:
    case LayerKind::contrast_norm:
      return in;
    case LayerKind::fully_connected:
      if (layer.units < 1) throw ValidationError("fully_connected needs >= 1 unit");
      return {layer.units, 1, 1};
    case LayerKind::conv:
    case LayerKind::maxpool: {
      if (layer.stride < 1) throw ValidationError("stride must be >= 1");
      if (layer.kernel < 1) throw ValidationError("kernel must be >= 1");
      if (layer.pad < 0) throw ValidationError("pad must be >= 0");
      if (layer.kind == LayerKind::conv && layer.filters < 1)
        throw ValidationError("conv needs >= 1 filter");
      const int ph = in.height + 2 * layer.pad, pw = in.width + 2 * layer.pad;
      if (layer.kernel > ph || layer.kernel > pw)
        throw ValidationError("kernel " + std::to_string(layer.kernel) +
                              " exceeds padded input " + in.str());
      const int oh = (ph - layer.kernel) / layer.stride + 1;
      const int ow = (pw - layer.kernel) / layer.stride + 1;
      return {layer.kind == LayerKind::conv ? layer.filters : in.channels, oh, ow};
    }
  }
  throw ValidationError("unhandled layer kind");
}

std::vector<Dims> NetSpec::chain() const {
  if (layers.empty()) throw ValidationError("network has no layers");
  std::vector<Dims> out;
  out.reserve(layers.size());
  Dims cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      cur = output_dims(layers[i], cur);
    } catch (const ValidationError& e) {
      throw ValidationError(layer_error(i, e.what()));
    }
    out.push_back(cur);
  }
  if (layers.back().kind != LayerKind::fully_connected)
    throw ValidationError(layer_error(layers.size() - 1, "head must be fully_connected"));
  return out;
}

int NetSpec::head_width() const { return static_cast<int>(chain().back().size()); }

std::size_t NetSpec::parameter_count() const {
  const auto dims = chain();
  std::size_t total = 0;
  Dims in = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::conv)
      total += static_cast<std::size_t>(l.filters) * in.channels * l.kernel * l.kernel + l.filters;
    else if (l.kind == LayerKind::fully_connected)
      total += static_cast<std::size_t>(l.units) * in.size() + l.units;
    in = dims[i];
  }
  return total;
}

std::size_t NetSpec::count(LayerKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.kind == kind; }));
}

template <typename Real>
void BasicGradients<Real>::zero() {
  for (auto& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), Real(0));
    std::fill(l.bias.begin(), l.bias.end(), Real(0));
  }
}

template <typename Real>
void BasicGradients<Real>::scale(Real factor) {
  for (auto& l : layers) {
    for (auto& v : l.weights) v *= factor;
    for (auto& v : l.bias) v *= factor;
  }
}

template <typename Real>
struct BasicNet<Real>::Trace {
  std::vector<BasicTensor<Real>> inputs;
  std::vector<std::vector<Real>> cols;
  std::vector<std::vector<std::int32_t>> argmax;
  std::vector<std::vector<Real>> scale;
  bool valid = false;
};

template <typename Real>
BasicNet<Real>::BasicNet(NetSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), dims_(spec_.chain()), seed_(seed) {
  std::mt19937_64 rng(seed);
  params_.resize(spec_.layers.size());
  momentum_.resize(spec_.layers.size());
  Dims in = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    std::size_t fan_in = 0, n_out = 0;
    if (l.kind == LayerKind::conv) {
      fan_in = static_cast<std::size_t>(in.channels) * l.kernel * l.kernel;
      n_out = static_cast<std::size_t>(l.filters);
    } else if (l.kind == LayerKind::fully_connected) {
      fan_in = in.size();
      n_out = static_cast<std::size_t>(l.units);
    }
    if (fan_in > 0) {
      auto& p = params_[i];
      p.weights.resize(fan_in * n_out);
      p.bias.assign(n_out, Real(0));
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& w : p.weights) w = static_cast<Real>((2.0 * unit_uniform(rng) - 1.0) * bound);
      momentum_[i].weights.assign(p.weights.size(), Real(0));
      momentum_[i].bias.assign(n_out, Real(0));
    }
    in = dims_[i];
  }
}

template <typename Real>
BasicTensor<Real> BasicNet<Real>::run(const BasicTensor<Real>& input, Trace* trace,
                                      int last_layer) const {
  if (input.dims() != spec_.input)
    throw ValidationError(layer_error(0, "input dims " + input.dims().str() + " do not match " +
                                             spec_.input.str()));
  const std::size_t n_layers = spec_.layers.size();
  const std::size_t stop =
      last_layer < 0 ? n_layers : std::min<std::size_t>(n_layers, static_cast<std::size_t>(last_layer) + 1);
  if (trace) {
    trace->inputs.resize(n_layers);
    trace->cols.resize(n_layers);
    trace->argmax.resize(n_layers);
    trace->scale.resize(n_layers);
    trace->valid = false;
  }
  std::vector<Real> local_cols;
  BasicTensor<Real> x = input;
  for (std::size_t i = 0; i < stop; ++i) {
    const LayerSpec& l = spec_.layers[i];
    const Dims od = dims_[i];
    if (trace) trace->inputs[i] = std::move(x);
    const BasicTensor<Real>& in = trace ? trace->inputs[i] : x;
    BasicTensor<Real> y(od);
    switch (l.kind) {
      case LayerKind::conv: {
        std::vector<Real>& cols = trace ? trace->cols[i] : local_cols;
        im2col(in, l, od, cols);
        const int rows = in.dims().channels * l.kernel * l.kernel;
        const int n_cols = od.height * od.width;
        Eigen::Map<const RowMat<Real>> w(params_[i].weights.data(), l.filters, rows);
        Eigen::Map<const RowMat<Real>> c(cols.data(), rows, n_cols);
        Eigen::Map<RowMat<Real>> out(y.data(), l.filters, n_cols);
        out.noalias() = w * c;
        out.colwise() += Eigen::Map<const Vec<Real>>(params_[i].bias.data(), l.filters);
        break;
      }
      case LayerKind::fully_connected: {
        Eigen::Map<const RowMat<Real>> w(params_[i].weights.data(), l.units,
                                         static_cast<Eigen::Index>(in.size()));
        Eigen::Map<const Vec<Real>> xin(in.data(), static_cast<Eigen::Index>(in.size()));
        Eigen::Map<Vec<Real>> out(y.data(), l.units);
        out.noalias() = w * xin;
        out += Eigen::Map<const Vec<Real>>(params_[i].bias.data(), l.units);
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j) y[j] = in[j] > Real(0) ? in[j] : Real(0);
        break;
      case LayerKind::maxpool: {
        std::vector<std::int32_t>* arg = trace ? &trace->argmax[i] : nullptr;
        if (arg) arg->assign(od.size(), 0);
        const Dims id = in.dims();
        std::size_t o = 0;
        for (int c = 0; c < od.channels; ++c)
          for (int oy = 0; oy < od.height; ++oy)
            for (int ox = 0; ox < od.width; ++ox, ++o) {
              int best = -1;
              Real best_v = Real(0);
              for (int ky = 0; ky < l.kernel; ++ky)
                for (int kx = 0; kx < l.kernel; ++kx) {
                  const int iy = oy * l.stride + ky, ix = ox * l.stride + kx;
                  const int idx = (c * id.height + iy) * id.width + ix;
                  if (best < 0 || in[idx] > best_v) {
                    best = idx;
                    best_v = in[idx];
                  }
                }
              y[o] = best_v;
              if (arg) (*arg)[o] = best;
            }
        break;
      }
      case LayerKind::contrast_norm: {
        const Dims id = in.dims();
        const std::size_t plane = static_cast<std::size_t>(id.height) * id.width;
        std::vector<Real> local_scale;
        std::vector<Real>& sc = trace ? trace->scale[i] : local_scale;
        sc.assign(in.size(), Real(0));
        const int half = kNormSize / 2;
        const Real a_over_n = static_cast<Real>(kNormAlpha / kNormSize);
        for (std::size_t px = 0; px < plane; ++px)
          for (int c = 0; c < id.channels; ++c) {
            Real sum = 0;
            const int lo = std::max(0, c - half), hi = std::min(id.channels - 1, c + half);
            for (int cc = lo; cc <= hi; ++cc) {
              const Real v = in[cc * plane + px];
              sum += v * v;
            }
            const std::size_t j = c * plane + px;
            sc[j] = Real(1) + a_over_n * sum;
            y[j] = in[j] * std::pow(sc[j], static_cast<Real>(-kNormBeta));
          }
        break;
      }
    }
    x = std::move(y);
  }
  if (trace) trace->valid = stop == n_layers;
  return x;
}

template <typename Real>
BasicTensor<Real> BasicNet<Real>::forward(const BasicTensor<Real>& input) {
  if (!trace_ || trace_.use_count() > 1) trace_ = std::make_shared<Trace>();
  return run(input, trace_.get(), -1);
}

template <typename Real>
BasicTensor<Real> BasicNet<Real>::infer(const BasicTensor<Real>& input, int last_layer) const {
  return run(input, nullptr, last_layer);
}

template <typename Real>
BasicGradients<Real> BasicNet<Real>::zero_gradients() const {
  BasicGradients<Real> g;
  g.layers.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    g.layers[i].weights.assign(params_[i].weights.size(), Real(0));
    g.layers[i].bias.assign(params_[i].bias.size(), Real(0));
  }
  return g;
}

template <typename Real>
BasicGradients<Real> BasicNet<Real>::backward(const BasicTensor<Real>& loss_gradient) {
  auto g = zero_gradients();
  backward(loss_gradient, g);
  return g;
}

template <typename Real>
void BasicNet<Real>::backward(const BasicTensor<Real>& loss_gradient, BasicGradients<Real>& acc) {
  if (!trace_ || !trace_->valid) throw ValidationError("backward called without a preceding forward");
  if (loss_gradient.size() != dims_.back().size())
    throw ValidationError(layer_error(spec_.layers.size() - 1,
                                      "loss gradient length " + std::to_string(loss_gradient.size()) +
                                          " != head width " + std::to_string(dims_.back().size())));
  if (acc.layers.size() != params_.size()) acc = zero_gradients();
  Trace& t = *trace_;
  BasicTensor<Real> g = loss_gradient;
  g.reshape(dims_.back());
  for (std::size_t ii = spec_.layers.size(); ii-- > 0;) {
    const LayerSpec& l = spec_.layers[ii];
    const BasicTensor<Real>& in = t.inputs[ii];
    const Dims od = dims_[ii];
    BasicTensor<Real> din(in.dims());
    switch (l.kind) {
      case LayerKind::conv: {
        const int rows = in.dims().channels * l.kernel * l.kernel;
        const int n_cols = od.height * od.width;
        Eigen::Map<const RowMat<Real>> dout(g.data(), l.filters, n_cols);
        Eigen::Map<const RowMat<Real>> c(t.cols[ii].data(), rows, n_cols);
        Eigen::Map<RowMat<Real>> dw(acc.layers[ii].weights.data(), l.filters, rows);
        dw.noalias() += dout * c.transpose();
        Eigen::Map<Vec<Real>>(acc.layers[ii].bias.data(), l.filters) += dout.rowwise().sum();
        Eigen::Map<const RowMat<Real>> w(params_[ii].weights.data(), l.filters, rows);
        std::vector<Real> dcols(static_cast<std::size_t>(rows) * n_cols);
        Eigen::Map<RowMat<Real>>(dcols.data(), rows, n_cols).noalias() = w.transpose() * dout;
        col2im(dcols, l, od, din);
        break;
      }
      case LayerKind::fully_connected: {
        const auto n_in = static_cast<Eigen::Index>(in.size());
        Eigen::Map<const Vec<Real>> dout(g.data(), l.units);
        Eigen::Map<const Vec<Real>> xin(in.data(), n_in);
        Eigen::Map<RowMat<Real>> dw(acc.layers[ii].weights.data(), l.units, n_in);
        dw.noalias() += dout * xin.transpose();
        Eigen::Map<Vec<Real>>(acc.layers[ii].bias.data(), l.units) += dout;
        Eigen::Map<const RowMat<Real>> w(params_[ii].weights.data(), l.units, n_in);
        Eigen::Map<Vec<Real>>(din.data(), n_in).noalias() = w.transpose() * dout;
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j) din[j] = in[j] > Real(0) ? g[j] : Real(0);
        break;
      case LayerKind::maxpool:
        for (std::size_t j = 0; j < g.size(); ++j) din[t.argmax[ii][j]] += g[j];
        break;
      case LayerKind::contrast_norm: {
        const Dims id = in.dims();
        const std::size_t plane = static_cast<std::size_t>(id.height) * id.width;
        const int half = kNormSize / 2;
        const Real beta = static_cast<Real>(kNormBeta);
        const Real coef = static_cast<Real>(2.0 * kNormAlpha * kNormBeta / kNormSize);
        const auto& sc = t.scale[ii];
        std::vector<Real> ratio(in.size());
        // ratio_c = g_c * in_c * scale_c^(-beta-1)
        for (std::size_t j = 0; j < in.size(); ++j)
          ratio[j] = g[j] * in[j] * std::pow(sc[j], -beta - Real(1));
        for (std::size_t px = 0; px < plane; ++px)
          for (int c = 0; c < id.channels; ++c) {
            const std::size_t j = c * plane + px;
            Real acc_r = 0;
            const int lo = std::max(0, c - half), hi = std::min(id.channels - 1, c + half);
            for (int cc = lo; cc <= hi; ++cc) acc_r += ratio[cc * plane + px];
            din[j] = g[j] * std::pow(sc[j], -beta) - coef * in[j] * acc_r;
          }
        break;
      }
    }
    g = std::move(din);
  }
  acc.input = std::move(g);
}

template <typename Real>
void BasicNet<Real>::sgd_step(const BasicGradients<Real>& gradients, double lr, const SgdConfig& config) {
  if (gradients.layers.size() != params_.size())
    throw ValidationError("gradient layer count does not match the network");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& g = gradients.layers[i];
    if (g.weights.size() != params_[i].weights.size() || g.bias.size() != params_[i].bias.size())
      throw ValidationError(layer_error(i, "gradient shape does not match weights"));
    for (Real v : g.weights)
      if (!std::isfinite(v)) throw ValidationError(layer_error(i, "non-finite weight gradient"));
    for (Real v : g.bias)
      if (!std::isfinite(v)) throw ValidationError(layer_error(i, "non-finite bias gradient"));
  }
  const Real mu = static_cast<Real>(config.momentum);
  const Real decay = static_cast<Real>(config.weight_decay);
  const Real rate = static_cast<Real>(lr);
  auto update = [&](std::vector<Real>& w, std::vector<Real>& v, const std::vector<Real>& g) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mu * v[j] - rate * (g[j] + decay * w[j]);
      w[j] += v[j];
    }
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    update(params_[i].weights, momentum_[i].weights, gradients.layers[i].weights);
    update(params_[i].bias, momentum_[i].bias, gradients.layers[i].bias);
  }
  ++step_;
}

template <typename Real>
void BasicNet<Real>::reset_momentum() {
  for (auto& m : momentum_) {
    std::fill(m.weights.begin(), m.weights.end(), Real(0));
    std::fill(m.bias.begin(), m.bias.end(), Real(0));
  }
}

template <typename Real>
std::vector<std::int64_t> BasicNet<Real>::activation_pattern() const {
  std::vector<std::int64_t> out;
  if (!trace_ || !trace_->valid) return out;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (spec_.layers[i].kind == LayerKind::relu) {
      for (Real v : trace_->inputs[i].values()) out.push_back(v > Real(0) ? 1 : 0);
    } else if (spec_.layers[i].kind == LayerKind::maxpool) {
      out.insert(out.end(), trace_->argmax[i].begin(), trace_->argmax[i].end());
    }
  }
  return out;
}

template <typename Real>
template <typename Other>
BasicNet<Other> BasicNet<Real>::cast() const {
  BasicNet<Other> out(spec_, seed_);
  out.step_ = step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.params_[i].weights.assign(params_[i].weights.begin(), params_[i].weights.end());
    out.params_[i].bias.assign(params_[i].bias.begin(), params_[i].bias.end());
  }
  return out;
}

template struct BasicGradients<float>;
template struct BasicGradients<double>;
template class BasicNet<float>;
template class BasicNet<double>;
template BasicNet<double> BasicNet<float>::cast<double>() const;
template BasicNet<float> BasicNet<double>::cast<float>() const;
template BasicNet<float> BasicNet<float>::cast<float>() const;

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (limit == 0 || limit >= n) return idx;
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradcheckReport gradcheck(const BasicNet<double>& source, const BasicTensor<double>& image,
                          const BasicTensor<double>& target, const GradcheckOptions& options) {
  BasicNet<double> net = source.cast<double>();
  const double eps = options.epsilon;
  GradcheckReport report;
  report.per_layer.assign(net.spec().layers.size(), 0.0);

  auto loss_grad = l2_loss(net.forward(image), target);
  const auto base_pattern = net.activation_pattern();
  const auto analytic = net.backward(loss_grad.gradient);

  auto probe = [&](double& slot, double analytic_value, double& worst) {
    const double saved = slot;
    slot = saved + eps;
    const double lp = l2_loss(net.forward(image), target).loss;
    const bool kink_p = net.activation_pattern() != base_pattern;
    slot = saved - eps;
    const double lm = l2_loss(net.forward(image), target).loss;
    const bool kink_m = net.activation_pattern() != base_pattern;
    slot = saved;
    if (kink_p || kink_m) {
      ++report.excluded;
      return;
    }
    const double err = relative_error(analytic_value, (lp - lm) / (2.0 * eps));
    worst = std::max(worst, err);
    ++report.checked;
  };

  std::mt19937_64 rng(options.sample_seed);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    auto& p = net.params()[i];
    const std::size_t nw = p.weights.size();
    const std::size_t total = nw + p.bias.size();
    if (total == 0) continue;
    for (std::size_t j : pick_indices(total, options.max_params_per_layer, rng)) {
      if (j < nw)
        probe(p.weights[j], analytic.layers[i].weights[j], report.per_layer[i]);
      else
        probe(p.bias[j - nw], analytic.layers[i].bias[j - nw], report.per_layer[i]);
    }
    report.max_relative_error = std::max(report.max_relative_error, report.per_layer[i]);
  }
  if (options.check_input) {
    BasicTensor<double> x = image;
    for (std::size_t j : pick_indices(x.size(), options.max_params_per_layer, rng)) {
      const double saved = x[j];
      x[j] = saved + eps;
      const double lp = l2_loss(net.forward(x), target).loss;
      const bool kink_p = net.activation_pattern() != base_pattern;
      x[j] = saved - eps;
      const double lm = l2_loss(net.forward(x), target).loss;
      const bool kink_m = net.activation_pattern() != base_pattern;
      x[j] = saved;
      if (kink_p || kink_m) {
        ++report.excluded;
        continue;
      }
      report.input_error =
          std::max(report.input_error, relative_error(analytic.input[j], (lp - lm) / (2.0 * eps)));
      ++report.checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, report.input_error);
  }
  return report;
}

GradcheckReport gradcheck(const RegressionNet& net, const Tensor& image, const Tensor& target,
                          const GradcheckOptions& options) {
  return gradcheck(net.cast<double>(), image.cast<double>(), target.cast<double>(), options);
}

GradcheckReport gradcheck_layer_kind(LayerKind kind, std::uint64_t seed, double epsilon) {
  Dims input{3, 8, 8};
  double input_scale = 1.0;
  LayerSpec layer;
  switch (kind) {
    case LayerKind::conv: layer = LayerSpec::conv(4, 3, 2, 1); break;
    case LayerKind::relu: layer = LayerSpec::relu(); break;
    case LayerKind::maxpool: layer = LayerSpec::maxpool(3, 2); break;
    case LayerKind::contrast_norm:
      layer = LayerSpec::contrast_norm();
      input = {7, 5, 5};
      input_scale = 40.0;
      break;
    case LayerKind::fully_connected: layer = LayerSpec::fully_connected(6); break;
  }
  BasicNet<double> net(NetSpec{input, {layer, LayerSpec::fully_connected(3)}}, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  BasicTensor<double> x(input), target = BasicTensor<double>::flat(3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = input_scale * (2.0 * unit_uniform(rng) - 1.0);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = 2.0 * unit_uniform(rng) - 1.0;
  GradcheckOptions options;
  options.epsilon = epsilon * input_scale;
  options.check_input = true;
  options.sample_seed = seed;
  return gradcheck(net, x, target, options);
}

}  // namespace atr::nn
