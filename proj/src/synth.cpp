#include <algorithm>
#include <cmath>
#include <random>

#include "atr/dataset.hpp"
#include "atr/error.hpp"

namespace atr {

namespace {

enum Label : std::uint8_t {
  kFace = 1, kSunglass, kHat, kScarf, kHair, kUpper, kLeftArm, kRightArm, kBelt,
  kPants, kLeftLeg, kRightLeg, kSkirt, kLeftShoe, kRightShoe, kBag, kDress
};

struct Point {
  double x, y;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * unit(); }
  bool chance(double p) { return unit() < p; }
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
};

class Canvas {
 public:
  Canvas(int w, int h) : labels_(w, h, 0) {}

  LabelMap& labels() { return labels_; }

  void ellipse(std::uint8_t label, Point c, double rx, double ry) {
    fill(label, c.x - rx, c.y - ry, c.x + rx, c.y + ry, [&](double x, double y) {
      const double dx = (x - c.x) / rx, dy = (y - c.y) / ry;
      return dx * dx + dy * dy <= 1.0;
    });
  }

  void capsule(std::uint8_t label, Point a, Point b, double r) {
    const double vx = b.x - a.x, vy = b.y - a.y, len2 = vx * vx + vy * vy;
    fill(label, std::min(a.x, b.x) - r, std::min(a.y, b.y) - r, std::max(a.x, b.x) + r,
         std::max(a.y, b.y) + r, [&](double x, double y) {
           const double t = len2 > 0 ? std::clamp(((x - a.x) * vx + (y - a.y) * vy) / len2, 0.0, 1.0) : 0.0;
           const double dx = x - (a.x + t * vx), dy = y - (a.y + t * vy);
           return dx * dx + dy * dy <= r * r;
         });
  }

  // Convex polygon with vertices in either winding.
  void polygon(std::uint8_t label, const std::vector<Point>& p) {
    double x0 = p[0].x, x1 = p[0].x, y0 = p[0].y, y1 = p[0].y;
    for (const auto& q : p) {
      x0 = std::min(x0, q.x), x1 = std::max(x1, q.x);
      y0 = std::min(y0, q.y), y1 = std::max(y1, q.y);
    }
    fill(label, x0, y0, x1, y1, [&](double x, double y) {
      int sign = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const Point& a = p[i];
        const Point& b = p[(i + 1) % p.size()];
        const double cross = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        const int s = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
        if (s == 0) continue;
        if (sign == 0) sign = s;
        else if (s != sign) return false;
      }
      return true;
    });
  }

  void rect(std::uint8_t label, double x0, double y0, double x1, double y1) {
    fill(label, x0, y0, x1, y1, [&](double x, double y) { return x >= x0 && x <= x1 && y >= y0 && y <= y1; });
  }

 private:
  template <typename Inside>
  void fill(std::uint8_t label, double x0, double y0, double x1, double y1, Inside inside) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)) - 1);
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)) - 1);
    const int ix1 = std::min(labels_.width() - 1, static_cast<int>(std::ceil(x1)) + 1);
    const int iy1 = std::min(labels_.height() - 1, static_cast<int>(std::ceil(y1)) + 1);
    for (int y = iy0; y <= iy1; ++y)
      for (int x = ix0; x <= ix1; ++x)
        if (inside(x + 0.5, y + 0.5)) labels_.at(x, y) = label;
  }

  LabelMap labels_;
};

Rgb random_color(Rng& rng) {
  return {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
          static_cast<std::uint8_t>(rng.below(256))};
}

Rgb jitter(const Rgb& c, Rng& rng, int amount) {
  auto j = [&](std::uint8_t v) {
    return static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + rng.below(2 * amount + 1) - amount, 0, 255));
  };
  return {j(c.r), j(c.g), j(c.b)};
}

Sample draw_figure(Rng& rng, const SynthConfig& cfg) {
  const int width = cfg.width, height = cfg.height;
  Canvas canvas(width, height);

  const double hh = rng.uniform(0.078, 0.11) * height;  // head height unit
  const double cx = rng.uniform(0.4, 0.6) * width;
  const double top_min = 0.9 * hh + 1, top_max = height - 6.8 * hh - 1;
  const double hy = rng.uniform(top_min, std::max(top_min, top_max));
  const double hx = cx + rng.uniform(-0.15, 0.15) * hh;
  const double ys = hy + 0.45 * hh;
  const double yw = ys + rng.uniform(2.4, 2.8) * hh;
  const double ya = yw + rng.uniform(3.1, 3.5) * hh;
  const double sw = rng.uniform(0.8, 0.95) * hh;
  const double ww = rng.uniform(0.6, 0.72) * hh;

  const bool hat = rng.chance(cfg.p_hat);
  const bool sunglass = rng.chance(cfg.p_sunglass);
  const bool scarf = rng.chance(cfg.p_scarf);
  const bool hair = rng.chance(cfg.p_hair);
  const bool belt = rng.chance(cfg.p_belt);
  const bool bag = rng.chance(cfg.p_bag);
  const bool shoes = rng.chance(cfg.p_shoes);
  const double bottom_draw = rng.unit();
  const bool pants = bottom_draw < cfg.p_pants;
  const bool skirt = !pants && bottom_draw < cfg.p_pants + cfg.p_skirt;
  const bool dress = !pants && !skirt;
  const bool long_hair = rng.chance(0.5);

  if (hair) {
    if (long_hair) canvas.ellipse(kHair, {hx, hy + 0.6 * hh}, 0.6 * hh, 0.95 * hh);
    canvas.ellipse(kHair, {hx, hy - 0.1 * hh}, 0.56 * hh, 0.6 * hh);
  }

  // Legs from hip to ankle, person's left on the image right.
  const double spread = rng.uniform(-0.1, 0.6) * hh;
  const double leg_r = rng.uniform(0.22, 0.28) * hh;
  const Point hip_l{cx + 0.3 * hh, yw}, hip_r{cx - 0.3 * hh, yw};
  const Point ankle_l{cx + 0.3 * hh + spread, ya}, ankle_r{cx - 0.3 * hh - spread, ya};
  if (pants) {
    canvas.capsule(kPants, hip_l, ankle_l, leg_r + 0.06 * hh);
    canvas.capsule(kPants, hip_r, ankle_r, leg_r + 0.06 * hh);
    canvas.rect(kPants, cx - ww, yw - 0.1 * hh, cx + ww, yw + 0.7 * hh);
  } else {
    canvas.capsule(kLeftLeg, hip_l, ankle_l, leg_r);
    canvas.capsule(kRightLeg, hip_r, ankle_r, leg_r);
  }
  if (shoes) {
    const double foot = rng.uniform(0.22, 0.3) * hh;
    canvas.ellipse(kLeftShoe, {ankle_l.x + 0.12 * hh, ankle_l.y + 0.12 * hh}, foot * 1.4, foot);
    canvas.ellipse(kRightShoe, {ankle_r.x - 0.12 * hh, ankle_r.y + 0.12 * hh}, foot * 1.4, foot);
  }

  // Arms hang from the shoulders, drawn before the torso covers the joint.
  const double arm_len = rng.uniform(2.5, 3.0) * hh;
  const double arm_r = rng.uniform(0.18, 0.24) * hh;
  const double ang_l = rng.uniform(0.05, 0.5), ang_r = rng.uniform(0.05, 0.5);
  const Point sh_l{cx + sw + 0.05 * hh, ys + 0.25 * hh}, sh_r{cx - sw - 0.05 * hh, ys + 0.25 * hh};
  canvas.capsule(kLeftArm, sh_l, {sh_l.x + arm_len * std::sin(ang_l), sh_l.y + arm_len * std::cos(ang_l)}, arm_r);
  canvas.capsule(kRightArm, sh_r, {sh_r.x - arm_len * std::sin(ang_r), sh_r.y + arm_len * std::cos(ang_r)}, arm_r);

  const double skirt_len = rng.uniform(1.2, 2.2) * hh;
  const double flare = rng.uniform(0.2, 0.6) * hh;
  if (dress) {
    canvas.polygon(kDress, {{cx - sw, ys}, {cx + sw, ys}, {cx + ww, yw}, {cx + ww + flare, yw + skirt_len},
                            {cx - ww - flare, yw + skirt_len}, {cx - ww, yw}});
  } else {
    canvas.polygon(kUpper, {{cx - sw, ys}, {cx + sw, ys}, {cx + ww, yw + 0.1 * hh}, {cx - ww, yw + 0.1 * hh}});
    if (skirt)
      canvas.polygon(kSkirt, {{cx - ww, yw}, {cx + ww, yw}, {cx + ww + flare, yw + skirt_len},
                              {cx - ww - flare, yw + skirt_len}});
  }
  if (belt) {
    const double tilt = rng.uniform(-0.12, 0.12) * hh, band = rng.uniform(0.1, 0.18) * hh;
    canvas.polygon(kBelt, {{cx - ww - 0.05 * hh, yw - band - tilt}, {cx + ww + 0.05 * hh, yw - band + tilt},
                           {cx + ww + 0.05 * hh, yw + band + tilt}, {cx - ww - 0.05 * hh, yw + band - tilt}});
    if (rng.chance(0.5)) canvas.rect(kBelt, cx - 0.15 * hh, yw - 1.6 * band, cx + 0.15 * hh, yw + 1.6 * band);
  }

  if (scarf) {
    canvas.rect(kScarf, hx - 0.6 * hh, ys - 0.15 * hh, hx + 0.6 * hh, ys + 0.35 * hh);
    const double end_x = hx + rng.uniform(-0.4, 0.2) * hh;
    canvas.rect(kScarf, end_x, ys, end_x + 0.25 * hh, ys + rng.uniform(0.8, 1.5) * hh);
  }
  canvas.ellipse(kFace, {hx, hy}, 0.38 * hh, 0.5 * hh);
  if (sunglass) {
    const double lens_x = rng.uniform(0.1, 0.15) * hh, lens_y = rng.uniform(0.06, 0.11) * hh;
    const double gap = rng.uniform(0.14, 0.2) * hh, ly = hy - rng.uniform(0.02, 0.1) * hh;
    canvas.ellipse(kSunglass, {hx - gap, ly}, lens_x, lens_y);
    canvas.ellipse(kSunglass, {hx + gap, ly}, lens_x, lens_y);
    canvas.rect(kSunglass, hx - gap, ly - 0.025 * hh, hx + gap, ly + 0.025 * hh);
  }
  if (hat) {
    const double brim = rng.uniform(0.45, 0.7) * hh, crown = rng.uniform(0.3, 0.42) * hh;
    const double top = rng.uniform(0.7, 0.9) * hh;
    canvas.rect(kHat, hx - brim, hy - 0.38 * hh, hx + brim, hy - 0.25 * hh);
    if (rng.chance(0.5))
      canvas.rect(kHat, hx - crown, hy - top, hx + crown, hy - 0.3 * hh);
    else
      canvas.ellipse(kHat, {hx, hy - 0.32 * hh}, crown, top - 0.32 * hh);
  }
  if (bag) {
    const double side = rng.chance(0.5) ? 1.0 : -1.0;
    const double bx = cx + side * (sw + rng.uniform(0.3, 0.6) * hh);
    const double bw = rng.uniform(0.7, 1.0) * hh;
    const double by = yw + rng.uniform(-0.6, 0.0) * hh;
    const double x0 = side > 0 ? bx : bx - bw;
    canvas.rect(kBag, x0, by, x0 + bw, by + rng.uniform(0.8, 1.1) * hh);
    canvas.capsule(kBag, {cx + side * 0.4 * hh, ys + 0.05 * hh}, {x0 + bw / 2, by}, 0.07 * hh);
  }

  // Colors: a shared skin tone, one tone per garment, cluttered background.
  std::array<Rgb, kNumLabels + 1> palette{};
  for (auto& c : palette) c = random_color(rng);
  static constexpr std::array<Rgb, 5> skins{{{241, 194, 125}, {224, 172, 105}, {198, 134, 66}, {141, 85, 36}, {255, 219, 172}}};
  const Rgb skin = jitter(skins[static_cast<std::size_t>(rng.below(5))], rng, 12);
  palette[kFace] = palette[kLeftArm] = palette[kRightArm] = palette[kLeftLeg] = palette[kRightLeg] = skin;
  palette[kLeftShoe] = palette[kRightShoe];

  RgbImage image(width, height);
  const Rgb bg_a = random_color(rng), bg_b = random_color(rng);
  for (int y = 0; y < height; ++y) {
    const double t = static_cast<double>(y) / std::max(1, height - 1);
    for (int x = 0; x < width; ++x)
      image.at(x, y) = {static_cast<std::uint8_t>(bg_a.r + t * (bg_b.r - bg_a.r)),
                        static_cast<std::uint8_t>(bg_a.g + t * (bg_b.g - bg_a.g)),
                        static_cast<std::uint8_t>(bg_a.b + t * (bg_b.b - bg_a.b))};
  }
  const int clutter = 2 + rng.below(4);
  for (int i = 0; i < clutter; ++i) {
    const Rgb c = random_color(rng);
    const int x0 = rng.below(width), y0 = rng.below(height);
    const int x1 = std::min(width, x0 + 8 + rng.below(width / 2)), y1 = std::min(height, y0 + 8 + rng.below(height / 2));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) image.at(x, y) = c;
  }
  const LabelMap& labels = canvas.labels();
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const auto k = labels.at(x, y);
      image.at(x, y) = jitter(k == 0 ? image.at(x, y) : palette[k], rng, 6);
    }

  Sample s{std::move(image), labels, std::nullopt};
  s.person = foreground_box(s.labels);
  return s;
}

}  // namespace

std::array<double, kNumLabels + 1> label_occurrence(const SynthConfig& c) {
  std::array<double, kNumLabels + 1> p{};
  const double dress = 1.0 - c.p_pants - c.p_skirt;
  p[0] = 1.0;
  p[kFace] = 1.0;
  p[kSunglass] = c.p_sunglass;
  p[kHat] = c.p_hat;
  p[kScarf] = c.p_scarf;
  p[kHair] = c.p_hair;
  p[kUpper] = 1.0 - dress;
  p[kLeftArm] = p[kRightArm] = 1.0;
  p[kBelt] = c.p_belt;
  p[kPants] = c.p_pants;
  p[kLeftLeg] = p[kRightLeg] = 1.0 - c.p_pants;
  p[kSkirt] = c.p_skirt;
  p[kLeftShoe] = p[kRightShoe] = c.p_shoes;
  p[kBag] = c.p_bag;
  p[kDress] = dress;
  return p;
}

std::vector<Sample> synth_generate(std::uint64_t seed, int count, const SynthConfig& config) {
  if (count < 1) throw ValidationError("synthetic sample count must be >= 1");
  if (config.width < 32 || config.height < 32) throw ValidationError("synthetic frame must be at least 32x32");
  if (config.p_pants + config.p_skirt > 1.0) throw ValidationError("pants and skirt probabilities exceed 1");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(draw_figure(rng, config));
  return out;
}

}  // namespace atr
