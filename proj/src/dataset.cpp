#include "atr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "atr/error.hpp"

namespace atr {

namespace {

constexpr std::array<Rgb, 18> kColors{{{0, 0, 0},       {255, 204, 153}, {64, 64, 64},    {128, 0, 128},
                                        {255, 128, 0},   {128, 64, 0},    {255, 0, 0},     {0, 192, 0},
                                        {0, 96, 0},      {255, 255, 0},   {0, 0, 255},     {0, 192, 192},
                                        {0, 96, 96},     {255, 0, 255},   {192, 192, 255}, {96, 96, 160},
                                        {160, 160, 0},   {255, 128, 192}}};

std::string stem_name(int i) {
  std::ostringstream s;
  s.width(3);
  s.fill('0');
  s << i;
  return s.str();
}

}  // namespace

LabelPalette::LabelPalette(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw ValidationError("palette needs background and at least one label");
  if (names_.size() > 256) throw ValidationError("palette has more than 256 entries");
  partner_.resize(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    partner_[i] = static_cast<int>(i);
    const std::string& n = names_[i];
    std::string other;
    if (n.rfind("left-", 0) == 0) other = "right-" + n.substr(5);
    if (n.rfind("right-", 0) == 0) other = "left-" + n.substr(6);
    if (other.empty()) continue;
    const auto it = std::find(names_.begin(), names_.end(), other);
    if (it != names_.end()) partner_[i] = static_cast<int>(it - names_.begin());
  }
}

LabelPalette LabelPalette::standard() {
  return LabelPalette({"background", "face", "sunglass", "hat", "scarf", "hair", "upper-clothes",
                       "left-arm", "right-arm", "belt", "pants", "left-leg", "right-leg", "skirt",
                       "left-shoe", "right-shoe", "bag", "dress"});
}

Rgb LabelPalette::color(int label) const {
  if (label >= 0 && label < static_cast<int>(kColors.size())) return kColors[static_cast<std::size_t>(label)];
  const auto h = static_cast<unsigned>(label) * 2654435761u;
  return {static_cast<std::uint8_t>(h >> 24), static_cast<std::uint8_t>(h >> 16),
          static_cast<std::uint8_t>(h >> 8)};
}

void LabelPalette::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& n : names_) out << n << "\n";
}

LabelPalette LabelPalette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open palette " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return LabelPalette(std::move(names));
}

void validate_sample(const Sample& sample, int num_labels) {
  if (sample.image.width() != sample.labels.width() || sample.image.height() != sample.labels.height())
    throw ValidationError("image is " + std::to_string(sample.image.width()) + "x" +
                          std::to_string(sample.image.height()) + " but labels are " +
                          std::to_string(sample.labels.width()) + "x" +
                          std::to_string(sample.labels.height()));
  for (auto v : sample.labels.values())
    if (v > num_labels)
      throw ValidationError("label value " + std::to_string(v) + " exceeds K=" + std::to_string(num_labels));
}

Sample load_sample(const std::filesystem::path& image_path, const std::filesystem::path& labels_path,
                   int num_labels) {
  Sample s{read_png_rgb(image_path), read_png_labels(labels_path), std::nullopt};
  try {
    validate_sample(s, num_labels);
  } catch (const ValidationError& e) {
    throw ValidationError(labels_path.string() + ": " + e.what());
  }
  return s;
}

void save_label_map(const LabelMap& labels, const std::filesystem::path& path) { write_png_labels(labels, path); }

std::optional<Box> foreground_box(const LabelMap& labels) {
  int x0 = labels.width(), y0 = labels.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x)
      if (labels.at(x, y) != 0) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return std::nullopt;
  return Box{double(x0), double(y0), double(x1 - x0 + 1), double(y1 - y0 + 1)};
}

Rect enlarged_region(const Box& box, double factor, int width, int height) {
  if (!(factor > 0)) throw ValidationError("enlargement factor must be positive");
  const double cx = box.x + box.w / 2, cy = box.y + box.h / 2;
  const double hw = box.w * factor / 2, hh = box.h * factor / 2;
  const int x0 = static_cast<int>(std::floor(cx - hw)), x1 = static_cast<int>(std::ceil(cx + hw));
  const int y0 = static_cast<int>(std::floor(cy - hh)), y1 = static_cast<int>(std::ceil(cy + hh));
  const Rect r = clip({x0, y0, x1 - x0, y1 - y0}, width, height);
  if (r.empty()) throw ValidationError("person box does not intersect the frame");
  return r;
}

PersonCrop crop_region(const Sample& sample, const Rect& region, int out_w, int out_h) {
  PersonCrop out;
  out.region = region;
  out.sample.image = resize_nearest(crop(sample.image, region), out_w, out_h);
  out.sample.labels = resize_nearest(crop(sample.labels, region), out_w, out_h);
  if (sample.person) {
    const double sx = static_cast<double>(out_w) / region.w, sy = static_cast<double>(out_h) / region.h;
    out.sample.person = Box{(sample.person->x - region.x) * sx, (sample.person->y - region.y) * sy,
                            sample.person->w * sx, sample.person->h * sy};
  }
  return out;
}

PersonCrop crop_person(const Sample& sample, const Box& box, double enlarge, int out_w, int out_h) {
  return crop_region(sample, enlarged_region(box, enlarge, sample.image.width(), sample.image.height()),
                     out_w, out_h);
}

Sample reflect(const Sample& sample, const LabelPalette& palette) {
  Sample out{flip_horizontal(sample.image), flip_horizontal(sample.labels), std::nullopt};
  for (auto& v : out.labels.values())
    if (v <= palette.num_labels()) v = static_cast<std::uint8_t>(palette.partner(v));
  if (sample.person) {
    Box b = *sample.person;
    b.x = sample.image.width() - b.x - b.w;
    out.person = b;
  }
  return out;
}

std::vector<Sample> augment(const Sample& sample, const LabelPalette& palette, int out_w, int out_h) {
  if (!sample.person) throw ValidationError("augmentation needs the person box");
  const int w = sample.image.width(), h = sample.image.height();
  const Rect base = enlarged_region(*sample.person, 1.0, w, h);
  std::vector<Rect> regions{base};
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      Rect r = base;
      r.x = std::clamp(r.x + dx * kAugmentShift, 0, w - r.w);
      r.y = std::clamp(r.y + dy * kAugmentShift, 0, h - r.h);
      regions.push_back(r);
    }
  for (double s : kAugmentScales) regions.push_back(enlarged_region(*sample.person, s, w, h));
  std::vector<Sample> out;
  out.reserve(kAugmentCount);
  for (const Rect& r : regions) {
    Sample c = crop_region(sample, r, out_w, out_h).sample;
    Sample m = reflect(c, palette);
    out.push_back(std::move(c));
    out.push_back(std::move(m));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  Dataset ds{LabelPalette::load(dir / "palette.txt"), {}, {}};
  const fs::path images = dir / "images", labels = dir / "labels";
  if (!fs::is_directory(images) || !fs::is_directory(labels))
    throw IoError(dir.string() + ": expected images/ and labels/ subdirectories");
  for (const auto& e : fs::directory_iterator(images))
    if (e.path().extension() == ".png") ds.names.push_back(e.path().stem().string());
  std::sort(ds.names.begin(), ds.names.end());
  std::vector<std::string> missing;
  for (const auto& n : ds.names)
    if (!fs::exists(labels / (n + ".png"))) missing.push_back(n);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += " " + m;
    throw IoError(dir.string() + ": label maps missing for:" + list);
  }
  std::map<std::string, Box> boxes;
  if (std::ifstream bin(dir / "boxes.txt"); bin) {
    std::string line;
    while (std::getline(bin, line)) {
      std::istringstream ls(line);
      std::string n;
      Box b;
      if (!(ls >> n)) continue;
      if (!(ls >> b.x >> b.y >> b.w >> b.h)) throw IoError(dir.string() + "/boxes.txt: malformed line '" + line + "'");
      boxes[n] = b;
    }
  }
  for (const auto& n : ds.names) {
    Sample s = load_sample(images / (n + ".png"), labels / (n + ".png"), ds.palette.num_labels());
    if (auto it = boxes.find(n); it != boxes.end())
      s.person = it->second;
    else
      s.person = foreground_box(s.labels);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  dataset.palette.save(dir / "palette.txt");
  std::ofstream boxes(dir / "boxes.txt");
  if (!boxes) throw IoError("cannot write " + (dir / "boxes.txt").string());
  boxes.precision(17);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const std::string n = i < dataset.names.size() ? dataset.names[i] : stem_name(static_cast<int>(i));
    const Sample& s = dataset.samples[i];
    write_png_rgb(s.image, dir / "images" / (n + ".png"));
    save_label_map(s.labels, dir / "labels" / (n + ".png"));
    if (s.person) boxes << n << ' ' << s.person->x << ' ' << s.person->y << ' ' << s.person->w << ' ' << s.person->h << "\n";
  }
}

}  // namespace atr
