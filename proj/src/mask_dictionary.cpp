#include "atr/mask_dictionary.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "atr/error.hpp"
#include "binary_io.hpp"

namespace atr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Minimizes 1/2 a'Ha - c'a + l1*sum(a) over a >= 0, warm-started from `a`.
void nonneg_coordinate_descent(const MatrixXd& h, const VectorXd& c, double l1, VectorXd& a) {
  VectorXd g = h * a - c;
  const Eigen::Index m = a.size();
  for (int sweep = 0; sweep < kEncodeMaxSweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double hjj = h(j, j);
      const double next = hjj > 0 ? std::max(0.0, a(j) - (g(j) + l1) / hjj) : 0.0;
      const double delta = next - a(j);
      if (delta != 0.0) {
        g.noalias() += delta * h.col(j);
        a(j) = next;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < kEncodeTolerance) break;
  }
}

double penalty(DictionaryVariant variant, const VectorXd& a) {
  return variant == DictionaryVariant::nmf_l1 ? a.cwiseAbs().sum() : a.squaredNorm();
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

MatrixXd stack_masks(const std::vector<FloatMap>& masks) {
  if (masks.empty()) throw ValidationError("dictionary learning needs at least one mask");
  const int w = masks.front().width(), h = masks.front().height();
  MatrixXd x(static_cast<Eigen::Index>(w) * h, static_cast<Eigen::Index>(masks.size()));
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].width() != w || masks[i].height() != h)
      throw ValidationError("masks must share one normalized size");
    for (std::size_t p = 0; p < masks[i].size(); ++p)
      x(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = masks[i][p];
  }
  return x;
}

TemplateDictionary learn_pca(int label, const std::vector<FloatMap>& masks,
                             const DictionaryLearnConfig& config) {
  const MatrixXd x = stack_masks(masks);
  const auto n = x.cols();
  if (config.atoms > n)
    throw ValidationError("pca needs at least as many samples as templates (" +
                          std::to_string(config.atoms) + " > " + std::to_string(n) + ")");
  const VectorXd mean = x.rowwise().mean();
  const MatrixXd centered = x.colwise() - mean;
  const MatrixXd gram = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  const VectorXd& values = eig.eigenvalues();
  const double top = std::max(1.0, values(n - 1));
  MatrixXd atoms = MatrixXd::Zero(x.rows(), config.atoms);
  atoms.col(0) = mean;
  for (int j = 1; j < config.atoms; ++j) {
    const Eigen::Index src = n - j;
    if (values(src) <= 1e-10 * top) continue;
    VectorXd dir = centered * eig.eigenvectors().col(src) / std::sqrt(values(src));
    Eigen::Index arg;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir(arg) < 0) dir = -dir;
    atoms.col(j) = dir / dir.norm();
  }
  return TemplateDictionary(label, masks.front().width(), masks.front().height(),
                            DictionaryVariant::pca, config.lambda, atoms.cast<float>());
}

}  // namespace

std::vector<std::optional<BinaryMask>> extract_label_masks(const LabelMap& labels, int num_labels) {
  std::vector<std::optional<BinaryMask>> out(static_cast<std::size_t>(num_labels) + 1);
  std::vector<int> x0(out.size(), labels.width()), y0(out.size(), labels.height());
  std::vector<int> x1(out.size(), -1), y1(out.size(), -1);
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x) {
      const int k = labels.at(x, y);
      if (k == 0 || k > num_labels) continue;
      x0[k] = std::min(x0[k], x);
      y0[k] = std::min(y0[k], y);
      x1[k] = std::max(x1[k], x);
      y1[k] = std::max(y1[k], y);
    }
  for (int k = 1; k <= num_labels; ++k) {
    if (x1[k] < 0) continue;
    BinaryMask m;
    m.box = {x0[k], y0[k], x1[k] - x0[k] + 1, y1[k] - y0[k] + 1};
    m.values = BoolMask(m.box.w, m.box.h, 0);
    for (int y = 0; y < m.box.h; ++y)
      for (int x = 0; x < m.box.w; ++x)
        m.values.at(x, y) = labels.at(m.box.x + x, m.box.y + y) == k ? 1 : 0;
    out[k] = std::move(m);
  }
  return out;
}

FloatMap resize_mask(const BinaryMask& mask, int rw, int rh) {
  if (rw < 1 || rh < 1) throw ValidationError("normalized mask size must be >= 1");
  FloatMap src(mask.values.width(), mask.values.height());
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = mask.values[i] ? 1.0f : 0.0f;
  return resize_bilinear(src, rw, rh);
}

std::string_view to_string(DictionaryVariant variant) {
  switch (variant) {
    case DictionaryVariant::nmf_l2: return "nmf_l2";
    case DictionaryVariant::nmf_l1: return "nmf_l1";
    case DictionaryVariant::pca: return "pca";
  }
  return "?";
}

DictionaryVariant parse_variant(std::string_view name) {
  if (name == "nmf_l2") return DictionaryVariant::nmf_l2;
  if (name == "nmf_l1") return DictionaryVariant::nmf_l1;
  if (name == "pca") return DictionaryVariant::pca;
  throw ValidationError("unknown dictionary variant '" + std::string(name) +
                        "' (expected nmf_l2, nmf_l1 or pca)");
}

TemplateDictionary::TemplateDictionary(int label, int rw, int rh, DictionaryVariant variant,
                                       double lambda, Eigen::MatrixXf atoms)
    : label_(label), rw_(rw), rh_(rh), variant_(variant), lambda_(lambda), atoms_(std::move(atoms)) {
  if (atoms_.rows() != static_cast<Eigen::Index>(rw) * rh)
    throw ValidationError("template length does not match rw*rh");
  const MatrixXd d = atoms_.cast<double>();
  gram_ = d.transpose() * d;
}

void TemplateDictionary::set_normalizer(std::vector<float> mean, float sigma) {
  if (static_cast<int>(mean.size()) != atom_count())
    throw ValidationError("normalizer length does not match template count");
  if (!(sigma > 0)) throw ValidationError("label " + std::to_string(label_) + ": sigma must be positive");
  mean_ = std::move(mean);
  sigma_ = sigma;
}

TemplateDictionary learn_dictionary(int label, const std::vector<FloatMap>& masks,
                                    const DictionaryLearnConfig& config, DictionaryLearnReport* report) {
  if (config.atoms < 1) throw ValidationError("template count must be >= 1");
  if (config.variant == DictionaryVariant::pca) return learn_pca(label, masks, config);
  if (!(config.lambda > 0)) throw ValidationError("lambda must be positive for nmf variants");

  const MatrixXd x = stack_masks(masks);
  const auto n = static_cast<std::size_t>(x.cols());
  const Eigen::Index z = x.rows();
  const int m = config.atoms;
  const bool l1 = config.variant == DictionaryVariant::nmf_l1;
  std::mt19937_64 rng(config.seed);

  auto unit_column = [&](std::size_t sample) -> VectorXd {
    VectorXd c = x.col(static_cast<Eigen::Index>(sample));
    const double nrm = c.norm();
    return nrm > 0 ? VectorXd(c / nrm) : c;
  };

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  // Seed templates with distinct samples first, then repeats, then noise.
  std::vector<std::size_t> seeds;
  for (std::size_t t = 0; t < n && seeds.size() < static_cast<std::size_t>(m); ++t) {
    bool repeat = false;
    for (std::size_t s : seeds) repeat = repeat || x.col(static_cast<Eigen::Index>(s)) == x.col(static_cast<Eigen::Index>(order[t]));
    if (!repeat) seeds.push_back(order[t]);
  }
  for (std::size_t t = 0; t < n && seeds.size() < static_cast<std::size_t>(m); ++t)
    if (std::find(seeds.begin(), seeds.end(), order[t]) == seeds.end()) seeds.push_back(order[t]);
  MatrixXd d(z, m);
  for (int j = 0; j < m; ++j) {
    if (static_cast<std::size_t>(j) < seeds.size()) {
      d.col(j) = unit_column(seeds[static_cast<std::size_t>(j)]);
    } else {
      for (Eigen::Index p = 0; p < z; ++p) d(p, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      d.col(j) /= d.col(j).norm();
    }
  }

  MatrixXd codes = MatrixXd::Zero(m, static_cast<Eigen::Index>(n));
  MatrixXd a_stat = MatrixXd::Zero(m, m);
  MatrixXd b_stat = MatrixXd::Zero(z, m);
  const double data_energy = x.squaredNorm();

  auto objective = [&]() {
    const double fit = data_energy - 2.0 * (d.cwiseProduct(b_stat)).sum() +
                       ((d.transpose() * d).cwiseProduct(a_stat)).sum();
    const double pen = l1 ? codes.sum() : a_stat.trace();
    return (0.5 * fit + config.lambda * pen) / static_cast<double>(n);
  };

  DictionaryLearnReport local;
  DictionaryLearnReport& rep = report ? *report : local;
  rep = {};
  rep.initial_objective = objective();

  const std::size_t batch = static_cast<std::size_t>(std::max(1, config.batch));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      MatrixXd h = d.transpose() * d;
      if (!l1) h.diagonal().array() += 2.0 * config.lambda;
      for (std::size_t t = start; t < stop; ++t) {
        const auto i = static_cast<Eigen::Index>(order[t]);
        const VectorXd c = d.transpose() * x.col(i);
        const VectorXd old = codes.col(i);
        VectorXd a = old;
        nonneg_coordinate_descent(h, c, l1 ? config.lambda : 0.0, a);
        codes.col(i) = a;
        a_stat.noalias() += a * a.transpose() - old * old.transpose();
        b_stat.noalias() += x.col(i) * (a - old).transpose();
      }
      for (int j = 0; j < m; ++j) {
        if (codes.row(j).isZero(0.0)) {
          // Unused template: replacing it leaves the objective unchanged.
          d.col(j) = unit_column(uniform_index(rng, n));
          continue;
        }
        const double ajj = a_stat(j, j);
        if (ajj <= 0) continue;
        VectorXd u = d.col(j) + (b_stat.col(j) - d * a_stat.col(j)) / ajj;
        u = u.cwiseMax(0.0);
        const double nrm = u.norm();
        if (nrm > 1.0) u /= nrm;
        d.col(j) = u;
      }
      if ((d.array() < 0).any() || (d.colwise().norm().array() > 1.0 + 1e-12).any())
        rep.invariants_held = false;
    }
    rep.objective.push_back(objective());
  }

  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    abs_sum += (x.col(col) - d * codes.col(col)).cwiseAbs().sum();
  }
  rep.mean_abs_residual = abs_sum / (static_cast<double>(n) * static_cast<double>(z));

  return TemplateDictionary(label, masks.front().width(), masks.front().height(), config.variant,
                            config.lambda, d.cast<float>());
}

Coefficients encode_mask(const TemplateDictionary& dict, std::span<const float> mask, double lambda) {
  if (static_cast<int>(mask.size()) != dict.atom_size())
    throw ValidationError("mask length " + std::to_string(mask.size()) + " != template length " +
                          std::to_string(dict.atom_size()));
  const Eigen::Map<const Eigen::VectorXf> b(mask.data(), static_cast<Eigen::Index>(mask.size()));
  const int m = dict.atom_count();
  Coefficients out{dict.label(), std::vector<float>(static_cast<std::size_t>(m), 0.0f),
                   CoefficientSpace::raw};
  if (dict.variant() == DictionaryVariant::pca) {
    const Eigen::VectorXf centered = b - dict.atoms().col(0);
    out.values[0] = 1.0f;
    for (int j = 1; j < m; ++j) out.values[j] = dict.atoms().col(j).dot(centered);
    return out;
  }
  const VectorXd c = (dict.atoms().transpose() * b).cast<double>();
  MatrixXd h = dict.gram();
  double l1 = 0.0;
  if (dict.variant() == DictionaryVariant::nmf_l1)
    l1 = lambda;
  else
    h.diagonal().array() += 2.0 * lambda;
  VectorXd a = VectorXd::Zero(m);
  nonneg_coordinate_descent(h, c, l1, a);
  for (int j = 0; j < m; ++j) out.values[j] = static_cast<float>(a(j));
  return out;
}

double dictionary_objective(const TemplateDictionary& dict, const std::vector<FloatMap>& masks,
                            const std::vector<Coefficients>& codes, double lambda) {
  if (masks.size() != codes.size() || masks.empty())
    throw ValidationError("objective needs one code per mask");
  const MatrixXd d = dict.atoms().cast<double>();
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    VectorXd b(static_cast<Eigen::Index>(masks[i].size()));
    for (std::size_t p = 0; p < masks[i].size(); ++p) b(static_cast<Eigen::Index>(p)) = masks[i][p];
    VectorXd a(static_cast<Eigen::Index>(codes[i].values.size()));
    for (std::size_t j = 0; j < codes[i].values.size(); ++j)
      a(static_cast<Eigen::Index>(j)) = codes[i].values[j];
    total += 0.5 * (b - d * a).squaredNorm() + lambda * penalty(dict.variant(), a);
  }
  return total / static_cast<double>(masks.size());
}

Normalizer fit_normalizer(const std::vector<Coefficients>& codes) {
  if (codes.size() < 2) throw ValidationError("normalizer needs at least two samples");
  const std::size_t m = codes.front().values.size();
  std::vector<double> mean(m, 0.0);
  for (const auto& c : codes) {
    if (c.values.size() != m) throw ValidationError("coefficient lengths differ");
    if (c.space != CoefficientSpace::raw) throw ValidationError("normalizer must be fitted on raw codes");
    for (std::size_t j = 0; j < m; ++j) mean[j] += c.values[j];
  }
  for (auto& v : mean) v /= static_cast<double>(codes.size());
  double spread = 0.0;
  for (const auto& c : codes)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = c.values[j] - mean[j];
      spread += d * d;
    }
  const double sigma = std::sqrt(spread / static_cast<double>(codes.size()));
  if (!(sigma > 0))
    throw ValidationError("label " + std::to_string(codes.front().label) +
                          ": coefficient spread is zero (degenerate label)");
  return {std::vector<float>(mean.begin(), mean.end()), static_cast<float>(sigma)};
}

Coefficients normalize(const TemplateDictionary& dict, const Coefficients& raw) {
  if (!dict.has_normalizer()) throw ValidationError("normalizer not fitted");
  if (raw.space != CoefficientSpace::raw) throw ValidationError("coefficients already normalized");
  if (raw.values.size() != dict.mean().size()) throw ValidationError("coefficient length mismatch");
  Coefficients out{raw.label, raw.values, CoefficientSpace::normalized};
  for (std::size_t j = 0; j < out.values.size(); ++j)
    out.values[j] = (raw.values[j] - dict.mean()[j]) / dict.sigma();
  return out;
}

Coefficients denormalize(const TemplateDictionary& dict, const Coefficients& normalized) {
  if (!dict.has_normalizer()) throw ValidationError("normalizer not fitted");
  if (normalized.space != CoefficientSpace::normalized)
    throw ValidationError("coefficients are not normalized");
  if (normalized.values.size() != dict.mean().size()) throw ValidationError("coefficient length mismatch");
  Coefficients out{normalized.label, normalized.values, CoefficientSpace::raw};
  for (std::size_t j = 0; j < out.values.size(); ++j)
    out.values[j] = dict.mean()[j] + dict.sigma() * normalized.values[j];
  return out;
}

FloatMap reconstruct_mask(const TemplateDictionary& dict, const Coefficients& raw) {
  if (raw.space != CoefficientSpace::raw)
    throw ValidationError("reconstruction needs raw-space coefficients");
  if (static_cast<int>(raw.values.size()) != dict.atom_count())
    throw ValidationError("coefficient length mismatch");
  Eigen::VectorXf a = Eigen::Map<const Eigen::VectorXf>(raw.values.data(), dict.atom_count());
  if (dict.variant() == DictionaryVariant::pca) a(0) = 1.0f;
  const Eigen::VectorXf b = dict.atoms() * a;
  FloatMap out(dict.rw(), dict.rh());
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = std::clamp(b(static_cast<Eigen::Index>(p)), 0.0f, 1.0f);
  return out;
}

const TemplateDictionary* DictionarySet::find(int label) const {
  if (label < 1 || label >= static_cast<int>(labels.size())) return nullptr;
  const auto& d = labels[static_cast<std::size_t>(label)];
  return d ? &*d : nullptr;
}

void save_dictionaries(const DictionarySet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::ostringstream lambda;
  lambda.precision(17);
  lambda << set.lambda;
  out << "ATRD 1\n"
      << "labels " << set.num_labels << "\n"
      << "atoms " << set.atoms << "\n"
      << "rw " << set.rw << "\n"
      << "rh " << set.rh << "\n"
      << "variant " << to_string(set.variant) << "\n"
      << "lambda " << lambda.str() << "\n"
      << "present";
  for (int k = 1; k <= set.num_labels; ++k) out << ' ' << (set.find(k) ? 1 : 0);
  out << "\nend\n";
  for (int k = 1; k <= set.num_labels; ++k) {
    const TemplateDictionary* d = set.find(k);
    if (!d) continue;
    std::vector<float> mean = d->mean();
    mean.resize(static_cast<std::size_t>(set.atoms), 0.0f);
    detail::write_f32_le(out, mean);
    const float sigma = d->sigma();
    detail::write_f32_le(out, std::span<const float>(&sigma, 1));
    detail::write_f32_le(out, std::span<const float>(d->atoms().data(),
                                                     static_cast<std::size_t>(d->atoms().size())));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DictionarySet load_dictionaries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dictionary file " + path.string());
  const std::string what = path.string();
  DictionarySet set;
  std::vector<int> present;
  for (const auto& line : detail::read_header_lines(in, "ATRD", what)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "labels") ls >> set.num_labels;
    else if (key == "atoms") ls >> set.atoms;
    else if (key == "rw") ls >> set.rw;
    else if (key == "rh") ls >> set.rh;
    else if (key == "variant") {
      std::string v;
      ls >> v;
      set.variant = parse_variant(v);
    } else if (key == "lambda") ls >> set.lambda;
    else if (key == "present") {
      int p;
      while (ls >> p) present.push_back(p);
    } else {
      throw IoError(what + ": unknown header key '" + key + "'");
    }
    if (ls.fail() && !ls.eof()) throw IoError(what + ": malformed header line '" + line + "'");
  }
  if (set.num_labels < 1 || set.atoms < 1 || set.rw < 1 || set.rh < 1 ||
      static_cast<int>(present.size()) != set.num_labels)
    throw IoError(what + ": incomplete header");
  set.labels.resize(static_cast<std::size_t>(set.num_labels) + 1);
  const Eigen::Index z = static_cast<Eigen::Index>(set.rw) * set.rh;
  for (int k = 1; k <= set.num_labels; ++k) {
    if (!present[static_cast<std::size_t>(k - 1)]) continue;
    std::vector<float> mean(static_cast<std::size_t>(set.atoms));
    float sigma = 0.0f;
    Eigen::MatrixXf atoms(z, set.atoms);
    detail::read_f32_le(in, mean, what);
    detail::read_f32_le(in, std::span<float>(&sigma, 1), what);
    detail::read_f32_le(in, std::span<float>(atoms.data(), static_cast<std::size_t>(atoms.size())), what);
    TemplateDictionary d(k, set.rw, set.rh, set.variant, set.lambda, std::move(atoms));
    if (sigma > 0) d.set_normalizer(std::move(mean), sigma);
    set.labels[static_cast<std::size_t>(k)] = std::move(d);
  }
  return set;
}

}  // namespace atr
