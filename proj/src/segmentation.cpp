#include "atr/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "atr/error.hpp"

namespace atr {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  std::size_t join(std::size_t a, std::size_t b, double weight) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    internal_[a] = weight;
    return a;
  }

  [[nodiscard]] std::size_t size(std::size_t root) const { return size_[root]; }
  [[nodiscard]] double internal(std::size_t root) const { return internal_[root]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<double> internal_;
};

struct Edge {
  std::size_t a, b;
  float w;
};

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

FloatMap smooth(const FloatMap& src, const std::vector<float>& k) {
  const int r = static_cast<int>(k.size() / 2), w = src.width(), h = src.height();
  FloatMap tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * src.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  return out;
}

}  // namespace

SuperPixelMap felzenszwalb_segment(const RgbImage& image, const FelzenszwalbParams& params) {
  if (image.empty()) throw ValidationError("segmentation of an empty image");
  if (params.k < 0 || params.min_size < 0 || params.sigma < 0)
    throw ValidationError("segmentation parameters must be non-negative");
  const int w = image.width(), h = image.height();
  std::array<FloatMap, 3> ch{FloatMap(w, h), FloatMap(w, h), FloatMap(w, h)};
  for (std::size_t i = 0; i < image.size(); ++i) {
    ch[0][i] = image[i].r;
    ch[1][i] = image[i].g;
    ch[2][i] = image[i].b;
  }
  if (params.sigma > 0) {
    const auto kernel = gaussian_kernel(params.sigma);
    for (auto& c : ch) c = smooth(c, kernel);
  }
  auto diff = [&](std::size_t a, std::size_t b) {
    const float dr = ch[0][a] - ch[0][b], dg = ch[1][a] - ch[1][b], db = ch[2][a] - ch[2][b];
    return std::sqrt(dr * dr + dg * dg + db * db);
  };
  auto index = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(w) * h * 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = index(x, y);
      if (x + 1 < w) edges.push_back({p, index(x + 1, y), diff(p, index(x + 1, y))});
      if (y + 1 < h) edges.push_back({p, index(x, y + 1), diff(p, index(x, y + 1))});
      if (x + 1 < w && y + 1 < h) edges.push_back({p, index(x + 1, y + 1), diff(p, index(x + 1, y + 1))});
      if (x > 0 && y + 1 < h) edges.push_back({p, index(x - 1, y + 1), diff(p, index(x - 1, y + 1))});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w < b.w; });

  const std::size_t n = static_cast<std::size_t>(w) * h;
  DisjointSet graph(n);
  for (const Edge& e : edges) {
    const std::size_t a = graph.find(e.a), b = graph.find(e.b);
    if (a == b) continue;
    const double ta = graph.internal(a) + params.k / static_cast<double>(graph.size(a));
    const double tb = graph.internal(b) + params.k / static_cast<double>(graph.size(b));
    if (e.w <= ta && e.w <= tb) graph.join(a, b, e.w);
  }

  // Split into 4-connected pieces: join 4-neighbours sharing a component.
  std::vector<Edge> four;
  four.reserve(static_cast<std::size_t>(w) * h * 2);
  for (const Edge& e : edges)
    if (e.a / w == e.b / w || e.a % w == e.b % w) four.push_back(e);
  DisjointSet pieces(n);
  for (const Edge& e : four)
    if (graph.find(e.a) == graph.find(e.b)) {
      const std::size_t a = pieces.find(e.a), b = pieces.find(e.b);
      if (a != b) pieces.join(a, b, 0.0);
    }
  const auto min_size = static_cast<std::size_t>(params.min_size);
  for (const Edge& e : four) {
    const std::size_t a = pieces.find(e.a), b = pieces.find(e.b);
    if (a != b && (pieces.size(a) < min_size || pieces.size(b) < min_size)) pieces.join(a, b, 0.0);
  }

  SuperPixelMap out{Grid<int>(w, h, -1), 0};
  std::vector<int> id(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t r = pieces.find(p);
    if (id[r] < 0) id[r] = out.count++;
    out.ids[p] = id[r];
  }
  return out;
}

LabelMap superpixel_smooth(const std::vector<FloatMap>& maps, const SuperPixelMap& segments) {
  if (maps.empty()) throw ValidationError("superpixel smoothing needs the background map");
  const int w = segments.ids.width(), h = segments.ids.height();
  for (const auto& m : maps)
    if (m.width() != w || m.height() != h) throw ValidationError("confidence map dims differ from segments");
  if (maps.size() > 256) throw ValidationError("too many labels for an 8-bit label map");
  const std::size_t labels = maps.size();
  std::vector<double> score(static_cast<std::size_t>(segments.count) * labels, 0.0);
  for (std::size_t p = 0; p < segments.ids.size(); ++p) {
    const int s = segments.ids[p];
    if (s < 0 || s >= segments.count) throw ValidationError("segment id out of range");
    double* row = score.data() + static_cast<std::size_t>(s) * labels;
    for (std::size_t k = 0; k < labels; ++k) row[k] += maps[k][p];
  }
  std::vector<std::uint8_t> best(static_cast<std::size_t>(segments.count), 0);
  for (int s = 0; s < segments.count; ++s) {
    const double* row = score.data() + static_cast<std::size_t>(s) * labels;
    std::size_t arg = 0;
    for (std::size_t k = 1; k < labels; ++k)
      if (row[k] > row[arg]) arg = k;
    best[static_cast<std::size_t>(s)] = static_cast<std::uint8_t>(arg);
  }
  LabelMap out(w, h);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = best[static_cast<std::size_t>(segments.ids[p])];
  return out;
}

}  // namespace atr
