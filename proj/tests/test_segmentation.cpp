#include <gtest/gtest.h>

#include <map>
#include <queue>
#include <random>

#include "atr/dataset.hpp"
#include "atr/error.hpp"
#include "atr/segmentation.hpp"
#include "test_util.hpp"

using namespace atr;

namespace {

// Checks ids cover 0..count-1 and every segment is one 4-connected piece.
void expect_valid_partition(const SuperPixelMap& s, int min_size) {
  const int w = s.ids.width(), h = s.ids.height();
  std::vector<int> size(static_cast<std::size_t>(s.count), 0);
  for (int id : s.ids.values()) {
    ASSERT_GE(id, 0);
    ASSERT_LT(id, s.count);
    ++size[static_cast<std::size_t>(id)];
  }
  for (int n : size) {
    EXPECT_GT(n, 0);
    if (w * h >= min_size) EXPECT_GE(n, min_size);
  }
  Grid<std::uint8_t> seen(w, h);
  int pieces = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (seen.at(x, y)) continue;
      ++pieces;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      seen.at(x, y) = 1;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          const int nx = cx + dx[d], ny = cy + dy[d];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || seen.at(nx, ny)) continue;
          if (s.ids.at(nx, ny) != s.ids.at(cx, cy)) continue;
          seen.at(nx, ny) = 1;
          q.push({nx, ny});
        }
      }
    }
  EXPECT_EQ(pieces, s.count);
}

// Same partition up to relabeling.
bool same_partition(const SuperPixelMap& a, const SuperPixelMap& b) {
  if (a.count != b.count || a.ids.size() != b.ids.size()) return false;
  std::map<int, int> fwd, back;
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    auto [f, fi] = fwd.emplace(a.ids[i], b.ids[i]);
    auto [g, gi] = back.emplace(b.ids[i], a.ids[i]);
    if (f->second != b.ids[i] || g->second != a.ids[i]) return false;
  }
  return true;
}

SuperPixelMap random_segments(int w, int h, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, count - 1);
  SuperPixelMap s{Grid<int>(w, h), count};
  for (auto& v : s.ids.values()) v = u(rng);
  for (int i = 0; i < count && i < w * h; ++i) s.ids[static_cast<std::size_t>(i)] = i;
  return s;
}

}  // namespace

TEST(Felzenszwalb, ConstantImageIsOneSegment) {
  const auto s = felzenszwalb_segment(RgbImage(30, 20, Rgb{90, 120, 30}));
  EXPECT_EQ(s.count, 1);
  for (int id : s.ids.values()) EXPECT_EQ(id, 0);
}

TEST(Felzenszwalb, TwoContrastingHalves) {
  RgbImage im(4, 2, Rgb{0, 0, 0});
  for (int y = 0; y < 2; ++y)
    for (int x = 2; x < 4; ++x) im.at(x, y) = {255, 255, 255};
  const auto s = felzenszwalb_segment(im, {100.0, 1, 0.0});
  EXPECT_EQ(s.count, 2);
  EXPECT_EQ(s.ids.at(0, 0), s.ids.at(1, 1));
  EXPECT_EQ(s.ids.at(2, 0), s.ids.at(3, 1));
  EXPECT_NE(s.ids.at(0, 0), s.ids.at(3, 0));
}

TEST(Felzenszwalb, RandomImagesGiveValidPartitions) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const RgbImage im = test::random_image(23 + trial, 17, rng);
    const FelzenszwalbParams p{50.0 + 30 * trial, 5 + trial, 0.8};
    const auto s = felzenszwalb_segment(im, p);
    expect_valid_partition(s, p.min_size);
  }
}

TEST(Felzenszwalb, SyntheticFrameValidAndDeterministic) {
  const auto samples = synth_generate(5, 3);
  for (const auto& sample : samples) {
    const auto a = felzenszwalb_segment(sample.image);
    const auto b = felzenszwalb_segment(sample.image);
    expect_valid_partition(a, 20);
    EXPECT_TRUE(same_partition(a, b));
    EXPECT_GT(a.count, 1);
  }
}

TEST(Felzenszwalb, InvalidInputRejected) {
  EXPECT_THROW(felzenszwalb_segment(RgbImage()), ValidationError);
  EXPECT_THROW(felzenszwalb_segment(RgbImage(4, 4), {-1.0, 20, 0.8}), ValidationError);
}

TEST(Smooth, DominantLabelFillsSingleSegment) {
  const SuperPixelMap one{Grid<int>(6, 5, 0), 1};
  std::vector<FloatMap> maps(5, FloatMap(6, 5, 0.1f));
  maps[3].at(2, 2) = 5.0f;
  const LabelMap out = superpixel_smooth(maps, one);
  for (auto v : out.values()) EXPECT_EQ(v, 3);
  maps[0] = FloatMap(6, 5, 0.3f);
  const LabelMap bg = superpixel_smooth(maps, one);
  for (auto v : bg.values()) EXPECT_EQ(v, 0);
}

TEST(Smooth, TiesGoToLowestLabel) {
  const SuperPixelMap one{Grid<int>(3, 3, 0), 1};
  std::vector<FloatMap> maps{FloatMap(3, 3, 0.2f), FloatMap(3, 3, 0.5f), FloatMap(3, 3, 0.5f)};
  const LabelMap out = superpixel_smooth(maps, one);
  for (auto v : out.values()) EXPECT_EQ(v, 1);
}

TEST(Smooth, MatchesBruteForceOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + trial % 6;
    const auto seg = random_segments(8, 8, 1 + trial % 9, rng);
    std::vector<FloatMap> maps(static_cast<std::size_t>(k) + 1, FloatMap(8, 8));
    for (auto& m : maps)
      for (auto& v : m.values()) v = u(rng);
    const LabelMap out = superpixel_smooth(maps, seg);
    for (int s = 0; s < seg.count; ++s) {
      int best = 0;
      double best_score = -1;
      for (int l = 0; l <= k; ++l) {
        double score = 0;
        for (std::size_t p = 0; p < 64; ++p)
          if (seg.ids[p] == s) score += maps[static_cast<std::size_t>(l)][p];
        if (score > best_score) best = l, best_score = score;
      }
      for (std::size_t p = 0; p < 64; ++p)
        if (seg.ids[p] == s) EXPECT_EQ(out[p], best) << "trial " << trial;
    }
  }
}

TEST(Smooth, ConstantOffsetLeavesLabelsUnchanged) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seg = random_segments(10, 10, 7, rng);
    std::vector<FloatMap> maps(5, FloatMap(10, 10));
    for (auto& m : maps)
      for (auto& v : m.values()) v = static_cast<float>(static_cast<int>(u(rng) * 64)) / 64.0f;
    auto shifted = maps;
    for (auto& m : shifted)
      for (auto& v : m.values()) v += 0.5f;
    const LabelMap a = superpixel_smooth(maps, seg);
    EXPECT_EQ(a, superpixel_smooth(shifted, seg));
    for (std::size_t p = 0; p < a.size(); ++p)
      for (std::size_t q = 0; q < a.size(); ++q)
        if (seg.ids[p] == seg.ids[q]) EXPECT_EQ(a[p], a[q]);
  }
}

TEST(Smooth, RejectsMissingOrMismatchedMaps) {
  const SuperPixelMap one{Grid<int>(3, 3, 0), 1};
  EXPECT_THROW(superpixel_smooth({}, one), ValidationError);
  EXPECT_THROW(superpixel_smooth({FloatMap(3, 3), FloatMap(2, 3)}, one), ValidationError);
}
