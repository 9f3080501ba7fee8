#include "atr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "atr/error.hpp"

namespace atr {

double intersection_over_union(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Rect clip(const Rect& r, int width, int height) {
  const int x0 = std::clamp(r.x, 0, width), y0 = std::clamp(r.y, 0, height);
  const int x1 = std::clamp(r.x + r.w, 0, width), y1 = std::clamp(r.y + r.h, 0, height);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

// Reads an 8-bit gray or palette PNG into `out` (indices are kept as-is).
// Returns an error message or nullptr. Kept free of C++ objects with
// destructors because of setjmp.
const char* read_indexed(std::FILE* fp, std::vector<std::uint8_t>& out, int& width, int& height) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return "cannot allocate png reader";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return "cannot allocate png info";
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "corrupt png";
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  if (type != PNG_COLOR_TYPE_GRAY && type != PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "label png must be 8-bit gray or palette";
  }
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "label png must be 8-bit";
  }
  if (depth < 8) png_set_packing(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  out.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) png_read_row(png, out.data() + static_cast<std::size_t>(y) * width, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return nullptr;
}

void write_simple(const std::filesystem::path& path, int width, int height, png_uint_32 format,
                  const void* data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + image.message);
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.values().data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png_rgb(const RgbImage& image, const std::filesystem::path& path) {
  static_assert(sizeof(Rgb) == 3);
  write_simple(path, image.width(), image.height(), PNG_FORMAT_RGB, image.values().data());
}

LabelMap read_png_labels(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> values;
  int width = 0, height = 0;
  if (const char* err = read_indexed(fp.get(), values, width, height))
    throw IoError(path.string() + ": " + err);
  LabelMap out(width, height);
  out.values() = std::move(values);
  return out;
}

void write_png_labels(const LabelMap& labels, const std::filesystem::path& path) {
  write_simple(path, labels.width(), labels.height(), PNG_FORMAT_GRAY, labels.values().data());
}

void write_png_confidence(const FloatMap& map, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(map.size());
  for (std::size_t i = 0; i < map.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(map[i], 0.0f, 1.0f)));
  write_simple(path, map.width(), map.height(), PNG_FORMAT_GRAY, bytes.data());
}

template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int width, int height) {
  if (src.empty()) throw ValidationError("resize of an empty grid");
  Grid<T> out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(src.height() - 1, static_cast<int>((y + 0.5) * src.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(src.width() - 1, static_cast<int>((x + 0.5) * src.width() / width));
      out.at(x, y) = src.at(sx, sy);
    }
  }
  return out;
}

FloatMap resize_bilinear(const FloatMap& src, int width, int height) {
  if (src.empty()) throw ValidationError("resize of an empty grid");
  if (width < 1 || height < 1) throw ValidationError("resize target must be at least 1x1");
  struct Tap {
    int i0, i1;
    float w1;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      const double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(in - 1, i0 + 1);
      t[o] = {i0, i1, static_cast<float>(s - i0)};
    }
    return t;
  };
  const auto tx = taps(src.width(), width);
  const auto ty = taps(src.height(), height);
  FloatMap out(width, height);
  for (int y = 0; y < height; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < width; ++x) {
      const Tap& b = tx[x];
      const float top = src.at(b.i0, a.i0) * (1 - b.w1) + src.at(b.i1, a.i0) * b.w1;
      const float bot = src.at(b.i0, a.i1) * (1 - b.w1) + src.at(b.i1, a.i1) * b.w1;
      out.at(x, y) = top * (1 - a.w1) + bot * a.w1;
    }
  }
  return out;
}

template <typename T>
Grid<T> crop(const Grid<T>& src, const Rect& r) {
  const Rect c = clip(r, src.width(), src.height());
  if (c.empty() || !(c == r)) throw ValidationError("crop rectangle outside the frame");
  Grid<T> out(r.w, r.h);
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x) out.at(x, y) = src.at(r.x + x, r.y + y);
  return out;
}

template <typename T>
Grid<T> flip_horizontal(const Grid<T>& src) {
  Grid<T> out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) out.at(x, y) = src.at(src.width() - 1 - x, y);
  return out;
}

nn::Tensor to_tensor(const RgbImage& image) {
  nn::Tensor t(nn::Dims{3, image.height(), image.width()});
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      const Rgb p = image.at(x, y);
      t.at(0, y, x) = p.r / 255.0f - 0.5f;
      t.at(1, y, x) = p.g / 255.0f - 0.5f;
      t.at(2, y, x) = p.b / 255.0f - 0.5f;
    }
  return t;
}

template Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>&, int, int);
template Grid<Rgb> resize_nearest(const Grid<Rgb>&, int, int);
template Grid<float> resize_nearest(const Grid<float>&, int, int);
template Grid<std::uint8_t> crop(const Grid<std::uint8_t>&, const Rect&);
template Grid<Rgb> crop(const Grid<Rgb>&, const Rect&);
template Grid<float> crop(const Grid<float>&, const Rect&);
template Grid<std::uint8_t> flip_horizontal(const Grid<std::uint8_t>&);
template Grid<Rgb> flip_horizontal(const Grid<Rgb>&);
template Grid<float> flip_horizontal(const Grid<float>&);

}  // namespace atr
