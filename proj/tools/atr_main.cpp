#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "atr/error.hpp"
#include "atr/evaluation.hpp"
#include "atr/workflow.hpp"

namespace fs = std::filesystem;
using namespace atr;

namespace {

struct Options {
  std::string dataset;
  std::string dict;
  std::string template_net;
  std::string shape_net;
  std::string scale = "desk";
  int labels = kNumLabels;
  int atoms = 16;
  int size = 32;
  double lambda = 0.001;
  std::string variant = "nmf_l2";
  std::uint64_t seed = 0;
  std::string box;
  double fh_k = 100.0;
  int fh_min = 20;
  double fh_sigma = 0.8;
  std::string out;

  // command specific
  int count = 200;
  int dict_epochs = 10;
  std::string which;
  int epochs = 30;
  double lr = 0.01;
  int batch = 32;
  std::string image;
  std::string truth;
  std::string overlay;
  std::string confidence_dir;
  bool no_refine = false;
  std::string pred;
  std::string gt;
  std::string csv;
  bool include_background = false;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError("missing --" + what);
  if (!fs::exists(path)) throw IoError(what + " not found: " + path);
}

void require_out(const std::string& path) {
  if (path.empty()) throw ValidationError("missing --out");
}

Box parse_box(const std::string& text) {
  std::stringstream s(text);
  Box b;
  char c1 = 0, c2 = 0, c3 = 0;
  if (!(s >> b.x >> c1 >> b.y >> c2 >> b.w >> c3 >> b.h) || c1 != ',' || c2 != ',' || c3 != ',' || !(b.w > 0) ||
      !(b.h > 0))
    throw ValidationError("--box expects \"x,y,w,h\" with positive w and h, got '" + text + "'");
  return b;
}

// Training crops: the 24 augmented variants of every sample at the net input size.
std::vector<Sample> training_crops(const Dataset& ds, Scale scale) {
  return augment_all(ds.samples, ds.palette, input_size(scale));
}

Dataset load_checked(const Options& o) {
  if (o.dataset.empty()) throw ValidationError("missing --dataset");
  Dataset ds = load_dataset(o.dataset);
  if (ds.samples.empty()) throw ValidationError("dataset " + o.dataset + " has no samples");
  if (ds.palette.num_labels() != o.labels)
    throw ValidationError("palette lists " + std::to_string(ds.palette.num_labels()) + " labels but --labels is " +
                          std::to_string(o.labels));
  return ds;
}

int cmd_synth(const Options& o) {
  require_out(o.out);
  Dataset ds;
  ds.samples = synth_generate(o.seed, o.count);
  for (int i = 0; i < o.count; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%03d", i);
    ds.names.emplace_back(name);
  }
  save_dataset(ds, o.out);
  std::cout << "wrote " << o.count << " samples to " << o.out << "\n";
  return 0;
}

int cmd_learn_dict(const Options& o) {
  require_out(o.out);
  const Dataset ds = load_checked(o);
  const auto crops = training_crops(ds, parse_scale(o.scale));
  const DictionaryLearnConfig c{o.atoms, o.lambda, parse_variant(o.variant), o.dict_epochs, 256, o.seed};
  const DictionarySet learned = learn_dictionary_set(crops, o.labels, o.size, o.size, c, [](const std::string& line) {
    std::cout << line << std::endl;
  });
  save_dictionaries(learned, o.out);
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  require_out(o.out);
  if (o.which != "template" && o.which != "shape") throw ValidationError("--which must be template or shape");
  require_file(o.dict, "dict");
  const Scale scale = parse_scale(o.scale);
  const DictionarySet dicts = load_dictionaries(o.dict);
  if (dicts.num_labels != o.labels)
    throw ValidationError("dictionary has K=" + std::to_string(dicts.num_labels) + " but --labels is " +
                          std::to_string(o.labels));
  const Dataset ds = load_checked(o);
  const auto crops = training_crops(ds, scale);
  const ShapeNormalizer shapes = fit_shape_normalizer(crops, o.labels);
  TargetSets sets = make_target_sets(crops, dicts, shapes);
  const bool is_template = o.which == "template";
  nn::RegressionNet net = is_template ? build_template_net(scale, o.labels, dicts.atoms, o.seed)
                                      : build_shape_net(scale, o.labels, o.seed);
  TrainingSet& data = is_template ? sets.template_set : sets.shape_set;
  TrainConfig tc;
  tc.lr = o.lr;
  tc.batch = o.batch;
  tc.epochs = o.epochs;
  tc.seed = o.seed;
  const double initial = mean_loss(net, data);
  std::ofstream curve(o.out + ".loss.csv");
  if (!curve) throw IoError("cannot write " + o.out + ".loss.csv");
  curve << "epoch,loss,lr\n0," << initial << "," << o.lr << "\n";
  const auto records = train(net, data, tc, nullptr, [&](const EpochRecord& r) {
    std::printf("epoch %d loss %.6g lr %.3g\n", r.epoch, r.loss, r.lr);
    std::fflush(stdout);
    curve << r.epoch << "," << r.loss << "," << r.lr << "\n";
  });
  net.set_step(static_cast<std::uint64_t>(records.size()));
  std::vector<nn::CheckpointExtra> extras;
  if (!is_template) {
    extras = to_extras(shapes);
    const auto refiner = fit_refiner(net, shapes, ds.samples, o.labels);
    for (auto& e : to_extras(refiner)) extras.push_back(std::move(e));
  }
  nn::save_checkpoint(net, o.out, extras);
  const double final_loss = mean_loss(net, data);
  std::printf("initial loss %.6g final loss %.6g ratio %.6g\n", initial, final_loss, final_loss / initial);
  std::printf("head width %d, maxpool layers %zu\n", net.spec().head_width(), net.spec().count(nn::LayerKind::maxpool));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

Box sidecar_box(const fs::path& image) {
  const fs::path side = fs::path(image).replace_extension(".box.txt");
  std::ifstream in(side);
  if (!in) throw ValidationError("no --box given and no sidecar " + side.string());
  std::string text;
  std::getline(in, text);
  return parse_box(text);
}

int cmd_parse(const Options& o) {
  require_out(o.out);
  require_file(o.dict, "dict");
  require_file(o.template_net, "template-net");
  require_file(o.shape_net, "shape-net");
  require_file(o.image, "image");
  const ParseModels models = ParseModels::load(o.dict, o.template_net, o.shape_net);
  const RgbImage image = read_png_rgb(o.image);
  const Box box = o.box.empty() ? sidecar_box(o.image) : parse_box(o.box);
  ParseConfig config;
  config.segmentation = {o.fh_k, o.fh_min, o.fh_sigma};
  config.refine_boxes = !o.no_refine;
  const ParseResult r = parse_image(models, image, box, config);
  save_label_map(r.labels, o.out);
  if (!o.overlay.empty()) {
    const LabelPalette palette = o.labels == kNumLabels ? LabelPalette::standard() : [&] {
      std::vector<std::string> names{"background"};
      for (int k = 1; k <= o.labels; ++k) names.push_back("label" + std::to_string(k));
      return LabelPalette(names);
    }();
    write_png_rgb(overlay(image, r.labels, palette), o.overlay);
  }
  if (!o.confidence_dir.empty()) {
    fs::create_directories(o.confidence_dir);
    for (std::size_t k = 0; k < r.confidences.size(); ++k)
      write_png_confidence(r.confidences[k], fs::path(o.confidence_dir) / ("c" + std::to_string(k) + ".png"));
  }
  if (!o.truth.empty()) {
    Confusion c(o.labels);
    c.accumulate(r.labels, read_png_labels(o.truth));
    const Metrics m = compute_metrics(c);
    std::printf("accuracy %.4f avg F1 %.4f\n", m.accuracy, m.avg_f1);
  }
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

fs::path label_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("missing directory argument");
  if (!fs::is_directory(dir)) throw IoError("directory not found: " + dir);
  return fs::is_directory(fs::path(dir) / "labels") ? fs::path(dir) / "labels" : fs::path(dir);
}

std::map<std::string, fs::path> pngs(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") out[e.path().filename().string()] = e.path();
  return out;
}

int cmd_eval(const Options& o) {
  const auto pred = pngs(label_dir(o.pred));
  const auto gt = pngs(label_dir(o.gt));
  std::string mismatch;
  for (const auto& [name, path] : pred)
    if (!gt.count(name)) mismatch += "\n  prediction without ground truth: " + name;
  for (const auto& [name, path] : gt)
    if (!pred.count(name)) mismatch += "\n  ground truth without prediction: " + name;
  if (!mismatch.empty()) throw ValidationError("file names differ:" + mismatch);
  if (gt.empty()) throw ValidationError("no label maps to evaluate");
  Confusion c(o.labels);
  for (const auto& [name, path] : gt) {
    try {
      c.accumulate(read_png_labels(pred.at(name)), read_png_labels(path));
    } catch (const ValidationError& e) {
      throw ValidationError(name + ": " + e.what());
    }
  }
  const Metrics m = compute_metrics(c, o.include_background);
  const auto names = o.labels == kNumLabels ? LabelPalette::standard().names() : std::vector<std::string>{};
  std::cout << format_report(m, names);
  if (!o.csv.empty()) {
    std::ofstream out(o.csv);
    if (!out) throw IoError("cannot write " + o.csv);
    out << format_report_csv(m, names);
  }
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const Scale scale = parse_scale(o.scale);
  if (scale != Scale::desk) throw ValidationError("gradcheck runs on desk-scale nets only");
  std::map<nn::LayerKind, double> worst;
  bool ok = true;
  for (auto kind : {nn::LayerKind::conv, nn::LayerKind::relu, nn::LayerKind::maxpool, nn::LayerKind::contrast_norm,
                    nn::LayerKind::fully_connected}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto r = nn::gradcheck_layer_kind(kind, o.seed + s);
      worst[kind] = std::max(worst[kind], r.max_relative_error);
    }
  }
  nn::GradcheckOptions opt;
  opt.max_params_per_layer = 40;
  opt.check_input = true;
  opt.sample_seed = o.seed;
  const int k = o.labels;
  for (auto* which : {"template", "shape"}) {
    const nn::RegressionNet net = std::string(which) == "template" ? build_template_net(scale, k, o.atoms, o.seed)
                                                                   : build_shape_net(scale, k, o.seed);
    nn::Tensor x(net.spec().input), t = nn::Tensor::flat(static_cast<std::size_t>(net.spec().head_width()));
    std::uint64_t state = o.seed * 2654435761u + 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
      state = state * 6364136223846793005ull + 1442695040888963407ull;
      x[i] = static_cast<float>((state >> 40) * 0x1.0p-24) - 0.5f;
    }
    const auto r = nn::gradcheck(net, x, t, opt);
    std::printf("%s net: max relative error %.3g (%zu checked, %zu excluded)\n", which, r.max_relative_error,
                r.checked, r.excluded);
    for (std::size_t i = 0; i < r.per_layer.size(); ++i)
      if (net.spec().layers[i].has_params()) {
        const auto kind = net.spec().layers[i].kind;
        worst[kind] = std::max(worst[kind], r.per_layer[i]);
      }
    ok = ok && r.max_relative_error < 1e-3;
  }
  for (const auto& [kind, err] : worst) {
    std::printf("%-14s max relative error %.3g %s\n", std::string(nn::to_string(kind)).c_str(), err,
                err < 1e-3 ? "ok" : "FAIL");
    ok = ok && err < 1e-3;
  }
  return ok ? 0 : 1;
}

int cmd_audit(const Options& o) {
  const Scale scale = parse_scale(o.scale);
  for (const auto& [name, spec] : {std::pair{"template", template_net_spec(scale, o.labels, o.atoms)},
                                   std::pair{"shape", shape_net_spec(scale, o.labels)}}) {
    std::cout << "# " << name << " net, " << spec.parameter_count() << " parameters\n"
              << nn::checkpoint_header(spec, o.seed, 0);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active template regression for human parsing"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--labels", o.labels, "foreground label count K")->check(CLI::Range(1, 255));
    c->add_option("--seed", o.seed, "random seed");
  };
  auto scale = [&](CLI::App* c) {
    c->add_option("--scale", o.scale, "network preset")->check(CLI::IsMember({"paper", "desk"}));
  };

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  common(synth);
  synth->add_option("--count", o.count, "number of samples")->check(CLI::Range(1, 100000));
  synth->add_option("--out", o.out, "output dataset directory");

  auto* learn = app.add_subcommand("learn-dict", "learn per-label template dictionaries");
  common(learn);
  scale(learn);
  learn->add_option("--dataset", o.dataset, "dataset directory");
  learn->add_option("--atoms", o.atoms, "templates per label M")->check(CLI::Range(1, 10000));
  learn->add_option("--size", o.size, "normalized mask side r")->check(CLI::Range(1, 1000));
  learn->add_option("--lambda", o.lambda, "coefficient penalty");
  learn->add_option("--variant", o.variant, "nmf_l2, nmf_l1 or pca");
  learn->add_option("--epochs", o.dict_epochs, "passes over the masks")->check(CLI::Range(0, 100000));
  learn->add_option("--out", o.out, "dictionary file");

  auto* train_cmd = app.add_subcommand("train", "train the template or shape network");
  common(train_cmd);
  scale(train_cmd);
  train_cmd->add_option("--which", o.which, "template or shape")->required();
  train_cmd->add_option("--dataset", o.dataset, "dataset directory");
  train_cmd->add_option("--dict", o.dict, "dictionary file");
  train_cmd->add_option("--epochs", o.epochs, "training epochs")->check(CLI::Range(0, 100000));
  train_cmd->add_option("--lr", o.lr, "learning rate");
  train_cmd->add_option("--batch", o.batch, "batch size")->check(CLI::Range(1, 100000));
  train_cmd->add_option("--out", o.out, "checkpoint file");

  auto* parse = app.add_subcommand("parse", "parse one image");
  common(parse);
  parse->add_option("--dict", o.dict, "dictionary file");
  parse->add_option("--template-net", o.template_net, "template net checkpoint");
  parse->add_option("--shape-net", o.shape_net, "shape net checkpoint");
  parse->add_option("--image", o.image, "input PNG");
  parse->add_option("--box", o.box, "person box x,y,w,h (default: <image>.box.txt)");
  parse->add_option("--fh-k", o.fh_k, "segmentation scale k");
  parse->add_option("--fh-min", o.fh_min, "minimum segment size");
  parse->add_option("--fh-sigma", o.fh_sigma, "segmentation pre-smoothing");
  parse->add_flag("--no-refine", o.no_refine, "skip bounding-box refinement");
  parse->add_option("--truth", o.truth, "ground-truth label map to score against");
  parse->add_option("--overlay", o.overlay, "write a color overlay PNG");
  parse->add_option("--confidence-dir", o.confidence_dir, "write per-label confidence PNGs");
  parse->add_option("--out", o.out, "output label map PNG");

  auto* eval = app.add_subcommand("eval", "score predicted label maps");
  common(eval);
  eval->add_option("--pred", o.pred, "prediction directory");
  eval->add_option("--gt", o.gt, "ground-truth directory (or dataset root)");
  eval->add_option("--csv", o.csv, "also write comma-separated results");
  eval->add_flag("--include-background", o.include_background, "average over background too");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every layer kind");
  common(grad);
  scale(grad);
  grad->add_option("--atoms", o.atoms, "templates per label M")->check(CLI::Range(1, 10000));

  auto* audit = app.add_subcommand("audit", "print the layer chains of a preset");
  common(audit);
  scale(audit);
  audit->add_option("--atoms", o.atoms, "templates per label M")->check(CLI::Range(1, 10000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*learn) return cmd_learn_dict(o);
    if (*train_cmd) return cmd_train(o);
    if (*parse) return cmd_parse(o);
    if (*eval) return cmd_eval(o);
    if (*grad) return cmd_gradcheck(o);
    if (*audit) return cmd_audit(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
