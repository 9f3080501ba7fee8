// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "atr/checkpoint.hpp"
#include "atr/evaluation.hpp"
#include "atr/workflow.hpp"

namespace fs = std::filesystem;
using namespace atr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

int failures = 0;

void run(int n, const char* title, const std::function<Outcome()>& body) {
  std::printf("criterion %d: running (%s)\n", n, title);
  std::fflush(stdout);
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d: %s  %s  [%s] (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

Outcome architecture() {
  const auto t0 = Clock::now();
  Outcome o;
  const nn::NetSpec shape = shape_net_spec(Scale::paper, 17);
  const auto sd = shape.chain();
  o.require(sd.front() == nn::Dims{48, 111, 111}, "shape net first layer is not 48x111x111");
  o.require(shape.head_width() == 85, "shape head is not 85");
  const nn::NetSpec tmpl = template_net_spec(Scale::paper, 17, 50);
  const auto td = tmpl.chain();
  o.require(tmpl.head_width() == 850, "template head is not 850");
  bool pooled = false;
  for (std::size_t i = 0; i < tmpl.layers.size(); ++i)
    if (tmpl.layers[i].kind == nn::LayerKind::maxpool) {
      pooled = td[i].height == 55 && td[i].width == 55;
      break;
    }
  o.require(pooled, "first template pool map is not 55x55");
  const double t = seconds_since(t0);
  o.require(t < 1.0, "shape computation took too long");
  o.detail = o.pass ? fmt("shape 48x111x111 -> 85, template pool 55x55 -> 850, %.3f s", t) : o.detail;
  return o;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  Outcome o;
  std::string summary;
  for (auto kind : {nn::LayerKind::conv, nn::LayerKind::relu, nn::LayerKind::maxpool, nn::LayerKind::contrast_norm,
                    nn::LayerKind::fully_connected}) {
    double worst = 0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = nn::gradcheck_layer_kind(kind, seed);
      worst = std::max(worst, r.max_relative_error);
      checked += r.checked;
    }
    o.require(worst < 1e-3, std::string(nn::to_string(kind)) + fmt(" error %.3g", worst));
    o.require(checked > 0, std::string(nn::to_string(kind)) + " checked nothing");
    summary += std::string(nn::to_string(kind)) + fmt(" %.2g ", worst);
  }
  const double t = seconds_since(t0);
  o.require(t < 60.0, "gradcheck exceeded 1 min");
  if (o.pass) o.detail = "20 instances per kind, max rel error: " + summary + "(tol 1e-3)";
  return o;
}

Outcome dictionary_learning() {
  Outcome o;
  const auto crops = augment_all(synth_generate(31, 40), LabelPalette::standard(), kDeskInputSize);
  double worst_rise = -1e300;
  int labels = 0;
  bool invariants = true;
  for (auto variant : {DictionaryVariant::nmf_l2, DictionaryVariant::nmf_l1}) {
    for (int k : {1, 6, 10}) {
      const auto masks = collect_masks(crops, k, 17, 24, 24);
      if (masks.size() < 20) continue;
      DictionaryLearnReport rep;
      const auto d = learn_dictionary(k, masks, {12, 0.001, variant, 8, 64, 5}, &rep);
      ++labels;
      double prev = rep.initial_objective;
      for (double v : rep.objective) {
        worst_rise = std::max(worst_rise, v - prev);
        prev = v;
      }
      invariants = invariants && rep.invariants_held && d.atoms().minCoeff() >= 0.0f;
      for (int j = 0; j < d.atom_count(); ++j) invariants = invariants && d.atoms().col(j).norm() <= 1.0f + 1e-6f;
    }
  }
  o.require(labels >= 4, "too few labels with enough masks");
  o.require(worst_rise <= 1e-6, fmt("objective rose by %.3g", worst_rise));
  o.require(invariants, "non-negativity or column-norm invariant broken");

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXf atom(30, 1);
    for (int p = 0; p < 30; ++p) atom(p, 0) = u(rng);
    atom /= atom.norm();
    const TemplateDictionary d(1, 30, 1, DictionaryVariant::nmf_l2, 0.001, atom);
    const std::vector<float> mask(atom.data(), atom.data() + 30);
    worst = std::max(worst, std::abs(encode_mask(d, mask, 0.001).values[0] - 1.0 / (1.0 + 2 * 0.001)));
  }
  o.require(worst <= 1e-6, fmt("single-atom code off by %.3g", worst));
  if (o.pass)
    o.detail = fmt("%.0f learning runs, max objective change %.3g (tol 1e-6), invariants held, single-atom error %.2g",
                   labels, worst_rise, worst);
  return o;
}

Outcome upperbound() {
  const auto t0 = Clock::now();
  Outcome o;
  const int r = 100, m = 50;
  const auto samples = synth_generate(7, 500);
  const auto dicts = learn_dictionary_set(samples, 17, r, r, {m, 0.001, DictionaryVariant::nmf_l2, 10, 64, 0});
  Confusion conf(17);
  for (const Sample& s : samples) {
    const int w = s.image.width(), h = s.image.height();
    const auto masks = extract_label_masks(s.labels, 17);
    std::vector<FloatMap> maps(18, FloatMap(w, h, 0.0f));
    maps[0] = FloatMap(w, h, 0.5f);
    for (int k = 1; k <= 17; ++k) {
      const auto& mask = masks[static_cast<std::size_t>(k)];
      const TemplateDictionary* d = dicts.find(k);
      if (!mask || !d) continue;
      const auto code = encode_mask(*d, resize_mask(*mask, r, r).values(), 0.001);
      const auto& b = mask->box;
      maps[static_cast<std::size_t>(k)] =
          morph_mask(reconstruct_mask(*d, code), {double(b.x), double(b.y), double(b.w), double(b.h), 1.0}, w, h).map;
    }
    LabelMap pred(w, h);
    for (std::size_t p = 0; p < pred.size(); ++p) {
      int best = 0;
      for (int k = 1; k <= 17; ++k)
        if (maps[static_cast<std::size_t>(k)][p] > maps[static_cast<std::size_t>(best)][p]) best = k;
      pred[p] = static_cast<std::uint8_t>(best);
    }
    conf.accumulate(pred, s.labels);
  }
  const Metrics met = compute_metrics(conf);
  const double t = seconds_since(t0);
  o.require(met.accuracy >= 0.95, fmt("accuracy %.4f < 0.95", met.accuracy));
  o.require(met.avg_f1 >= 0.85, fmt("avg F1 %.4f < 0.85", met.avg_f1));
  o.require(t < 600, "exceeded 10 min");
  if (o.pass) o.detail = fmt("accuracy %.4f (>= 0.95), avg F1 %.4f (>= 0.85), 500 samples, M=50, 100x100", met.accuracy, met.avg_f1);
  return o;
}

LabelMap position_baseline(const std::vector<Sample>& train) {
  const int w = train.front().labels.width(), h = train.front().labels.height();
  std::vector<std::array<int, 18>> counts(static_cast<std::size_t>(w * h), std::array<int, 18>{});
  for (const Sample& s : train)
    for (std::size_t p = 0; p < s.labels.size(); ++p) ++counts[p][s.labels[p]];
  LabelMap out(w, h);
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = static_cast<std::uint8_t>(std::max_element(counts[p].begin(), counts[p].end()) - counts[p].begin());
  return out;
}

struct SavedModels {
  fs::path dir;
  bool ok = false;
};

SavedModels saved;

Outcome end_to_end() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto train = synth_generate(1, 200);
  const auto test = synth_generate(2, 50);
  DeskTrainingConfig cfg;
  cfg.template_train.epochs = cfg.shape_train.epochs = 25;
  const ParseModels models = train_models(train, LabelPalette::standard(), cfg, [&](const std::string& line) {
    if (line.find("epoch") != std::string::npos) std::printf("  [%5.0f s] %s\n", seconds_since(t0), line.c_str());
    std::fflush(stdout);
  });
  const LabelMap baseline = position_baseline(train);
  Confusion cb(17), cp(17);
  for (const Sample& s : test) {
    cb.accumulate(baseline, s.labels);
    cp.accumulate(parse_image(models, s.image, *s.person).labels, s.labels);
  }
  const Metrics mb = compute_metrics(cb), mp = compute_metrics(cp);
  const double gap = 100 * (mp.avg_f1 - mb.avg_f1);
  const double t = seconds_since(t0);
  o.require(gap >= 15.0, fmt("pipeline F1 %.2f vs baseline %.2f, gap %.2f < 15", 100 * mp.avg_f1, 100 * mb.avg_f1, gap));
  o.require(t <= 3600, "exceeded 60 min");
  if (o.pass)
    o.detail = fmt("pipeline avg F1 %.2f, baseline %.2f, gap %.2f points (>= 15), 25 epochs", 100 * mp.avg_f1,
                   100 * mb.avg_f1, gap);

  saved.dir = fs::temp_directory_path() / "atr_acceptance";
  fs::remove_all(saved.dir);
  fs::create_directories(saved.dir);
  save_dictionaries(models.dicts, saved.dir / "d.atrd");
  nn::save_checkpoint(models.template_net, saved.dir / "t.atrn");
  auto extras = to_extras(models.shapes);
  for (auto& e : to_extras(models.refiner)) extras.push_back(std::move(e));
  nn::save_checkpoint(models.shape_net, saved.dir / "s.atrn", extras);
  Dataset held{LabelPalette::standard(), {"000"}, {test.front()}};
  save_dataset(held, saved.dir / "held");
  const Box& b = *test.front().person;
  std::ofstream(saved.dir / "held" / "images" / "000.box.txt") << b.x << "," << b.y << "," << b.w << "," << b.h << "\n";
  saved.ok = true;
  return o;
}

Outcome smoothing() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + trial % 7, segs = 1 + trial % 10;
    SuperPixelMap seg{Grid<int>(8, 8), segs};
    std::uniform_int_distribution<int> pick(0, segs - 1);
    for (int s = 0; s < segs; ++s) seg.ids[static_cast<std::size_t>(s)] = s;
    for (std::size_t p = static_cast<std::size_t>(segs); p < 64; ++p) seg.ids[p] = pick(rng);
    std::vector<FloatMap> maps(static_cast<std::size_t>(k) + 1, FloatMap(8, 8));
    for (auto& m : maps)
      for (auto& v : m.values()) v = u(rng);
    const LabelMap out = superpixel_smooth(maps, seg);
    for (int s = 0; s < segs; ++s) {
      int best = 0;
      double best_score = -1;
      for (int l = 0; l <= k; ++l) {
        double score = 0;
        for (std::size_t p = 0; p < 64; ++p)
          if (seg.ids[p] == s) score += maps[static_cast<std::size_t>(l)][p];
        if (score > best_score) best = l, best_score = score;
      }
      for (std::size_t p = 0; p < 64; ++p)
        if (seg.ids[p] == s && out[p] != best) ++mismatches;
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " pixels differ from the oracle");
  if (o.pass) o.detail = "100 random 8x8 instances identical to per-segment accumulation";
  return o;
}

Outcome augmentation() {
  Outcome o;
  const LabelPalette p = LabelPalette::standard();
  int wrong_count = 0, wrong_pixels = 0;
  for (const Sample& s : synth_generate(13, 50)) {
    const auto v = augment(s, p, kDeskInputSize, kDeskInputSize);
    if (v.size() != 24) ++wrong_count;
    for (std::size_t i = 0; i + 1 < v.size(); i += 2)
      for (int l = 1; l <= 17; ++l) {
        const auto a = std::count(v[i].labels.values().begin(), v[i].labels.values().end(), l);
        const auto b = std::count(v[i + 1].labels.values().begin(), v[i + 1].labels.values().end(), p.partner(l));
        if (a != b) ++wrong_pixels;
      }
    const Sample r = reflect(s, p);
    for (int l = 1; l <= 17; ++l) {
      const auto a = std::count(s.labels.values().begin(), s.labels.values().end(), l);
      const auto b = std::count(r.labels.values().begin(), r.labels.values().end(), p.partner(l));
      if (a != b) ++wrong_pixels;
    }
  }
  o.require(wrong_count == 0, std::to_string(wrong_count) + " samples without 24 variants");
  o.require(wrong_pixels == 0, std::to_string(wrong_pixels) + " label counts broke the reflection identity");
  if (o.pass) o.detail = "24 variants each, reflected partner counts equal on 50 samples";
  return o;
}

LabelMap row(std::initializer_list<int> v) {
  LabelMap m(static_cast<int>(v.size()), 1);
  std::size_t i = 0;
  for (int x : v) m[i++] = static_cast<std::uint8_t>(x);
  return m;
}

Outcome metrics() {
  Outcome o;
  Confusion c(2);
  c.accumulate(row({1, 2, 2, 0}), row({1, 1, 2, 0}));
  const Metrics m = compute_metrics(c);
  o.require(m.accuracy == 0.75, fmt("accuracy %.17g", m.accuracy));
  o.require(m.f1[1] == 2.0 / 3.0, fmt("F1_1 %.17g", m.f1[1]));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> lab(0, 6);
  int broken = 0;
  for (int trial = 0; trial < 100; ++trial) {
    LabelMap g(13, 9), p(13, 9);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<std::uint8_t>(lab(rng)), p[i] = static_cast<std::uint8_t>(lab(rng));
    std::vector<std::size_t> perm(g.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    LabelMap gs(9, 13), ps(9, 13);
    for (std::size_t i = 0; i < perm.size(); ++i) gs[i] = g[perm[i]], ps[i] = p[perm[i]];
    Confusion a(6), b(6);
    a.accumulate(p, g);
    b.accumulate(ps, gs);
    const Metrics x = compute_metrics(a), y = compute_metrics(b);
    if (x.accuracy != y.accuracy || x.f1 != y.f1 || x.avg_f1 != y.avg_f1 || x.precision != y.precision ||
        x.recall != y.recall)
      ++broken;
  }
  o.require(broken == 0, std::to_string(broken) + " permutations changed the metrics");
  if (o.pass) o.detail = "accuracy 0.75 and F1_1 2/3 exact, 100 random permutations invariant";
  return o;
}

Outcome normalization() {
  Outcome o;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3, 3), pos(0, 5), vis(0, 1);
  Eigen::MatrixXf atoms = Eigen::MatrixXf::Constant(16, 8, 0.25f);
  TemplateDictionary d(1, 4, 4, DictionaryVariant::nmf_l2, 0.001, atoms);
  std::vector<float> mean(8);
  for (auto& v : mean) v = static_cast<float>(pos(rng));
  d.set_normalizer(mean, 0.37f);
  ShapeNormalizer shapes;
  shapes.num_labels = 3;
  shapes.mean.assign(4, {});
  shapes.stddev.assign(4, {});
  for (int l = 1; l <= 3; ++l)
    for (int c = 0; c < 4; ++c) {
      shapes.mean[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)] = 50 * u(rng);
      shapes.stddev[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)] = 1 + 10 * pos(rng);
    }
  double worst_code = 0, worst_shape = 0;
  for (int i = 0; i < 1000; ++i) {
    Coefficients a{1, std::vector<float>(8), CoefficientSpace::raw};
    for (auto& v : a.values) v = static_cast<float>(pos(rng));
    const Coefficients back = denormalize(d, normalize(d, a));
    for (std::size_t j = 0; j < 8; ++j) worst_code = std::max(worst_code, std::abs(double(back.values[j]) - a.values[j]));
    const int l = 1 + i % 3;
    const ShapeParams s{30 * u(rng), 30 * u(rng), 20 * pos(rng), 20 * pos(rng), vis(rng), ShapeSpace::raw};
    const ShapeParams r = denormalize(shapes, l, normalize(shapes, l, s));
    worst_shape = std::max({worst_shape, std::abs(r.x - s.x), std::abs(r.y - s.y), std::abs(r.w - s.w),
                            std::abs(r.h - s.h), std::abs(r.v - s.v)});
  }
  o.require(worst_code <= 1e-6, fmt("coefficient round-trip error %.3g", worst_code));
  o.require(worst_shape <= 1e-6, fmt("shape round-trip error %.3g", worst_shape));
  if (o.pass) o.detail = fmt("1000 vectors, max error coefficients %.2g, shapes %.2g (tol 1e-6)", worst_code, worst_shape);
  return o;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  Outcome o;
  if (!saved.ok) {
    o.require(false, "no trained models (criterion 5 did not finish)");
    return o;
  }
  const std::string d = saved.dir.string();
  const std::string base = std::string(ATR_CLI) + " parse --dict " + d + "/d.atrd --template-net " + d +
                           "/t.atrn --shape-net " + d + "/s.atrn --image " + d + "/held/images/000.png --out ";
  o.require(shell(base + d + "/first.png > /dev/null") == 0, "first parse failed");
  o.require(shell(base + d + "/second.png > /dev/null") == 0, "second parse failed");
  const std::string a = bytes(saved.dir / "first.png"), b = bytes(saved.dir / "second.png");
  o.require(!a.empty() && a == b, "label maps differ");
  if (o.pass) o.detail = "two parse runs wrote byte-identical label maps (" + std::to_string(a.size()) + " bytes)";
  return o;
}

}  // namespace

int main() {
  run(1, "architecture parity", architecture);
  run(2, "gradient fidelity", gradients);
  run(3, "dictionary learning", dictionary_learning);
  run(4, "upperbound analog", upperbound);
  run(5, "end-to-end desk run", end_to_end);
  run(6, "super-pixel smoothing oracle", smoothing);
  run(7, "augmentation", augmentation);
  run(8, "metrics", metrics);
  run(9, "normalization round-trips", normalization);
  run(10, "determinism", determinism);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
