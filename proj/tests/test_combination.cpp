#include <gtest/gtest.h>

#include <random>

#include "atr/combination.hpp"
#include "atr/error.hpp"
#include "test_util.hpp"

using namespace atr;

namespace {

FloatMap random_map(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0, 1);
  FloatMap m(w, h);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

BoolMask random_mask(int w, int h, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  BoolMask m(w, h);
  for (auto& v : m.values()) v = b(rng);
  return m;
}

// Brute-force window scan with the same offsets and border value.
BoolMask window_oracle(const BoolMask& m, int size, std::uint8_t outside, bool all) {
  BoolMask out(m.width(), m.height());
  const int lo = -(size / 2), hi = size - 1 - size / 2;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool acc = all;
      for (int dy = lo; dy <= hi; ++dy)
        for (int dx = lo; dx <= hi; ++dx) {
          const int sx = x + dx, sy = y + dy;
          const bool inside = sx >= 0 && sy >= 0 && sx < m.width() && sy < m.height();
          const bool v = inside ? m.at(sx, sy) != 0 : outside != 0;
          acc = all ? (acc && v) : (acc || v);
        }
      out.at(x, y) = acc;
    }
  return out;
}

int count(const BoolMask& m) {
  int n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

}  // namespace

TEST(Morph, BelowGateIsZero) {
  const auto r = morph_mask(FloatMap(4, 4, 1.0f), {10, 10, 20, 20, 0.3}, 64, 64);
  for (float v : r.map.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_FALSE(r.degenerate);
}

TEST(Morph, AllOnesRectanglePlacement) {
  const auto r = morph_mask(FloatMap(100, 100, 1.0f), {10, 20, 50, 80, 0.9}, 200, 200);
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x)
      EXPECT_EQ(r.map.at(x, y), (x >= 10 && x < 60 && y >= 20 && y < 100) ? 1.0f : 0.0f) << x << "," << y;
}

TEST(Morph, ClippedPlacementMatchesUnclippedOracle) {
  std::mt19937_64 rng(3);
  const FloatMap mask = random_map(16, 16, rng);
  const ShapeParams s{-15, 30, 40, 50, 1.0};
  const auto clipped = morph_mask(mask, s, 60, 60);
  // same box inside a frame padded by 100 on every side, then cropped back
  const auto big = morph_mask(mask, {s.x + 100, s.y + 100, s.w, s.h, 1.0}, 260, 260);
  const FloatMap oracle = crop(big.map, {100, 100, 60, 60});
  EXPECT_EQ(clipped.map, oracle);
  double mass = 0;
  for (float v : clipped.map.values()) mass += v;
  EXPECT_GT(mass, 0);
}

TEST(Morph, DegenerateBoxFlagged) {
  const auto r = morph_mask(FloatMap(4, 4, 1.0f), {10, 10, 0, 20, 0.8}, 64, 64);
  EXPECT_TRUE(r.degenerate);
  for (float v : r.map.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Morph, UniformScalingKeepsArgmax) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const double t = 0.05 + 0.95 * u(rng);
    std::vector<FloatMap> a, b;
    for (int k = 0; k < 4; ++k) {
      FloatMap m = random_map(8, 8, rng);
      FloatMap scaled = m;
      for (auto& v : scaled.values()) v = static_cast<float>(v * t);
      const ShapeParams s{u(rng) * 20, u(rng) * 20, 10 + u(rng) * 20, 10 + u(rng) * 20, 1.0};
      a.push_back(morph_mask(m, s, 40, 40).map);
      b.push_back(morph_mask(scaled, s, 40, 40).map);
    }
    for (std::size_t p = 0; p < a[0].size(); ++p) {
      int ia = 0, ib = 0;
      for (int k = 1; k < 4; ++k) {
        if (a[k][p] > a[ia][p]) ia = k;
        if (b[k][p] > b[ib][p]) ib = k;
      }
      if (a[ia][p] > 0) EXPECT_EQ(ia, ib);
    }
  }
}

TEST(ForegroundConfidence, SingleMapIsItself) {
  std::mt19937_64 rng(1);
  const FloatMap m = random_map(7, 5, rng);
  EXPECT_EQ(foreground_confidence({m}), m);
}

TEST(ForegroundConfidence, DisjointRectanglesGiveUnion) {
  FloatMap a(10, 10), b(10, 10);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) a.at(x, y) = 1;
  for (int y = 6; y < 10; ++y)
    for (int x = 5; x < 9; ++x) b.at(x, y) = 1;
  const FloatMap u = foreground_confidence({a, b});
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(u[i], a[i] + b[i]);
}

TEST(ForegroundConfidence, MatchesPixelLoop) {
  std::mt19937_64 rng(2);
  std::vector<FloatMap> maps;
  for (int k = 0; k < 6; ++k) maps.push_back(random_map(13, 9, rng));
  const FloatMap f = foreground_confidence(maps);
  for (std::size_t p = 0; p < f.size(); ++p) {
    float m = maps[0][p];
    for (const auto& x : maps) m = x[p] > m ? x[p] : m;
    EXPECT_EQ(f[p], m);
  }
  EXPECT_THROW(foreground_confidence({}), ValidationError);
  EXPECT_THROW(foreground_confidence({FloatMap(2, 2), FloatMap(3, 2)}), ValidationError);
}

TEST(Morphology, ErodeAndDilateMatchBruteForce) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const BoolMask m = random_mask(17, 13, trial % 2 ? 0.8 : 0.2, rng);
    const int size = 1 + trial % 10;
    for (std::uint8_t o : {0, 1}) {
      EXPECT_EQ(erode(m, size, o), window_oracle(m, size, o, true));
      EXPECT_EQ(dilate(m, size, o), window_oracle(m, size, o, false));
    }
  }
}

TEST(Morphology, ErodeDilateDuality) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const BoolMask m = random_mask(20, 15, 0.5, rng);
    for (std::uint8_t o : {0, 1}) {
      EXPECT_EQ(erode(m, 10, o), invert(dilate(invert(m), 10, static_cast<std::uint8_t>(1 - o))));
      EXPECT_EQ(dilate(m, 10, o), invert(erode(invert(m), 10, static_cast<std::uint8_t>(1 - o))));
    }
  }
}

TEST(Seeds, ZeroConfidence) {
  const SeedSet s = generate_seeds(FloatMap(30, 20, 0.0f));
  EXPECT_EQ(count(s.foreground), 0);
  EXPECT_EQ(count(s.background), 600);
}

TEST(Seeds, SolidSquareErodesToInnerSquare) {
  FloatMap c(80, 80);
  for (int y = 20; y < 60; ++y)
    for (int x = 20; x < 60; ++x) c.at(x, y) = 1.0f;
  const SeedSet s = generate_seeds(c);
  BoolMask fg(80, 80);
  for (std::size_t i = 0; i < c.size(); ++i) fg[i] = c[i] > 0.5f;
  EXPECT_EQ(s.foreground, window_oracle(fg, 10, 0, true));
  EXPECT_EQ(count(s.foreground), 31 * 31);
  EXPECT_EQ(count(s.background), 80 * 80 - 40 * 40);
}

TEST(Seeds, FullConfidence) {
  const SeedSet s = generate_seeds(FloatMap(30, 20, 1.0f));
  EXPECT_EQ(count(s.background), 0);
  EXPECT_EQ(s.foreground, window_oracle(BoolMask(30, 20, 1), 10, 0, true));
  EXPECT_EQ(count(s.foreground), (30 - 9) * (20 - 9));
}

TEST(Seeds, AlwaysDisjoint) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const SeedSet s = generate_seeds(random_map(25, 25, rng), 1 + trial % 6);
    for (std::size_t i = 0; i < s.foreground.size(); ++i) EXPECT_FALSE(s.foreground[i] && s.background[i]);
  }
}

TEST(BackgroundConfidence, RedForegroundBlueBackground) {
  RgbImage im(20, 10, Rgb{0, 0, 255});
  SeedSet s{BoolMask(20, 10), BoolMask(20, 10)};
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      im.at(x, y) = {255, 0, 0};
      s.foreground.at(x, y) = 1;
    }
  for (int y = 0; y < 10; ++y)
    for (int x = 10; x < 20; ++x) s.background.at(x, y) = 1;
  const FloatMap c0 = background_confidence(im, s);
  // (100+1)/(100+4096) against 1/(100+4096)
  EXPECT_GT(c0.at(15, 5), 0.99f);
  EXPECT_NEAR(c0.at(15, 5), 101.0 / 102.0, 1e-6);
  EXPECT_NEAR(c0.at(3, 3), 1.0 / 102.0, 1e-6);
}

TEST(BackgroundConfidence, IdenticalDistributionsGiveHalf) {
  std::mt19937_64 rng(7);
  const RgbImage im = test::random_image(16, 16, rng);
  SeedSet s{BoolMask(16, 16), BoolMask(16, 16)};
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) (y % 2 ? s.foreground : s.background).at(x, y) = 1;
  RgbImage mirrored = im;
  for (int y = 0; y < 16; y += 2)
    for (int x = 0; x < 16; ++x) mirrored.at(x, y + 1) = mirrored.at(x, y);
  const FloatMap c0 = background_confidence(mirrored, s);
  for (float v : c0.values()) EXPECT_NEAR(v, 0.5f, 1e-6);
}

TEST(BackgroundConfidence, EmptySeedSets) {
  const RgbImage im(6, 6, Rgb{10, 20, 30});
  const FloatMap a = background_confidence(im, {BoolMask(6, 6), BoolMask(6, 6, 1)});
  for (float v : a.values()) EXPECT_EQ(v, 1.0f);
  const FloatMap b = background_confidence(im, {BoolMask(6, 6, 1), BoolMask(6, 6)});
  for (float v : b.values()) EXPECT_EQ(v, 0.0f);
}

TEST(BackgroundConfidence, PosteriorsSumToOne) {
  std::mt19937_64 rng(8);
  const RgbImage im = test::random_image(24, 24, rng);
  const SeedSet s = generate_seeds(random_map(24, 24, rng), 1);
  ASSERT_GT(count(s.foreground), 0);
  ASSERT_GT(count(s.background), 0);
  const FloatMap c0 = background_confidence(im, s);
  // independent joint-histogram oracle
  std::vector<double> fg(4096, 1.0), bg(4096, 1.0);
  double nf = 4096, nb = 4096;
  auto bin = [](Rgb p) { return (p.r / 16) * 256 + (p.g / 16) * 16 + p.b / 16; };
  for (std::size_t i = 0; i < im.size(); ++i) {
    if (s.foreground[i]) fg[bin(im[i])] += 1, nf += 1;
    if (s.background[i]) bg[bin(im[i])] += 1, nb += 1;
  }
  for (std::size_t i = 0; i < im.size(); ++i) {
    const double pb = bg[bin(im[i])] / nb, pf = fg[bin(im[i])] / nf;
    EXPECT_NEAR(c0[i], pb / (pb + pf), 1e-6);
    EXPECT_NEAR(c0[i] + pf / (pb + pf), 1.0, 1e-6);
  }
}

TEST(BackgroundConfidence, OvershootBandClassifiedBackground) {
  // person-colored block with a morphed foreground map that overshoots it
  RgbImage im(60, 80, Rgb{40, 90, 200});
  for (int y = 15; y < 65; ++y)
    for (int x = 15; x < 45; ++x) im.at(x, y) = {220, 170, 120};
  FloatMap cf(60, 80);
  for (int y = 10; y < 70; ++y)
    for (int x = 10; x < 50; ++x) cf.at(x, y) = 0.9f;
  const FloatMap c0 = background_confidence(im, generate_seeds(cf));
  for (int y = 10; y < 70; ++y)
    for (int x = 10; x < 50; ++x) {
      const bool band = x < 15 || x >= 45 || y < 15 || y >= 65;
      if (band) EXPECT_GT(c0.at(x, y), 0.5f) << x << "," << y;
      else EXPECT_LT(c0.at(x, y), 0.5f) << x << "," << y;
    }
}
