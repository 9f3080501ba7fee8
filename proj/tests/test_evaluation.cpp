#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "atr/error.hpp"
#include "atr/evaluation.hpp"
#include "test_util.hpp"

using namespace atr;

namespace {

LabelMap row(std::initializer_list<int> v) {
  LabelMap m(static_cast<int>(v.size()), 1);
  int i = 0;
  for (int x : v) m.at(i++, 0) = static_cast<std::uint8_t>(x);
  return m;
}

}  // namespace

TEST(Confusion, PerfectPredictionIsDiagonal) {
  std::mt19937_64 rng(1);
  const LabelMap m = test::random_labels(9, 7, 5, rng);
  Confusion c(5);
  c.accumulate(m, m);
  EXPECT_EQ(c.total(), 63u);
  for (int g = 0; g <= 5; ++g)
    for (int p = 0; p <= 5; ++p)
      if (g != p) EXPECT_EQ(c.at(g, p), 0u);
  const Metrics r = compute_metrics(c);
  EXPECT_EQ(r.accuracy, 1.0);
  for (int l : r.averaged_labels) EXPECT_EQ(r.f1[l], 1.0);
  EXPECT_EQ(r.avg_f1, 1.0);
}

TEST(Confusion, HandCounts2x2) {
  LabelMap gt(2, 2), pred(2, 2);
  gt.values() = {0, 1, 1, 2};
  pred.values() = {0, 2, 1, 2};
  Confusion c(2);
  c.accumulate(pred, gt);
  EXPECT_EQ(c.at(0, 0), 1u);
  EXPECT_EQ(c.at(1, 2), 1u);
  EXPECT_EQ(c.at(1, 1), 1u);
  EXPECT_EQ(c.at(2, 2), 1u);
  EXPECT_EQ(c.row(1), 2u);
  EXPECT_EQ(c.col(2), 2u);
}

TEST(Confusion, AdditiveOverImages) {
  std::mt19937_64 rng(2);
  const LabelMap g1 = test::random_labels(5, 4, 3, rng), p1 = test::random_labels(5, 4, 3, rng);
  const LabelMap g2 = test::random_labels(5, 4, 3, rng), p2 = test::random_labels(5, 4, 3, rng);
  Confusion a(3), b(3), both(3);
  a.accumulate(p1, g1);
  b.accumulate(p2, g2);
  LabelMap gc(5, 8), pc(5, 8);
  std::copy(g1.values().begin(), g1.values().end(), gc.values().begin());
  std::copy(g2.values().begin(), g2.values().end(), gc.values().begin() + 20);
  std::copy(p1.values().begin(), p1.values().end(), pc.values().begin());
  std::copy(p2.values().begin(), p2.values().end(), pc.values().begin() + 20);
  both.accumulate(pc, gc);
  a += b;
  EXPECT_EQ(a, both);
}

TEST(Confusion, MismatchRejected) {
  Confusion c(3);
  EXPECT_THROW(c.accumulate(LabelMap(2, 2), LabelMap(2, 3)), ValidationError);
  EXPECT_THROW(c.accumulate(row({4}), row({0})), ValidationError);
  EXPECT_THROW(compute_metrics(Confusion(3)), ValidationError);
}

TEST(Metrics, FourPixelExample) {
  Confusion c(2);
  c.accumulate(row({1, 2, 2, 0}), row({1, 1, 2, 0}));
  const Metrics m = compute_metrics(c);
  EXPECT_EQ(m.accuracy, 0.75);
  EXPECT_EQ(m.precision[1], 1.0);
  EXPECT_EQ(m.recall[1], 0.5);
  EXPECT_EQ(m.f1[1], 2.0 / 3.0);
  EXPECT_EQ(m.precision[2], 0.5);
  EXPECT_EQ(m.recall[2], 1.0);
  ASSERT_TRUE(m.foreground_accuracy);
  EXPECT_EQ(*m.foreground_accuracy, 2.0 / 3.0);
  EXPECT_EQ(m.averaged_labels, (std::vector<int>{1, 2}));
  EXPECT_DOUBLE_EQ(m.avg_f1, 2.0 / 3.0);
}

TEST(Metrics, AllBackgroundTruthHasNoForegroundAccuracy) {
  Confusion c(3);
  c.accumulate(row({0, 1, 0}), row({0, 0, 0}));
  const Metrics m = compute_metrics(c);
  EXPECT_FALSE(m.foreground_accuracy.has_value());
  EXPECT_TRUE(m.averaged_labels.empty());
  EXPECT_EQ(m.f1[1], 0.0);
}

TEST(Metrics, AveragesOnlyOverPresentLabels) {
  Confusion c(5);
  c.accumulate(row({1, 1, 3, 0, 4}), row({1, 1, 3, 3, 0}));
  const Metrics m = compute_metrics(c);
  EXPECT_EQ(m.averaged_labels, (std::vector<int>{1, 3}));
  EXPECT_DOUBLE_EQ(m.avg_recall, (1.0 + 0.5) / 2);
  const Metrics with_bg = compute_metrics(c, true);
  EXPECT_EQ(with_bg.averaged_labels, (std::vector<int>{0, 1, 3}));
  EXPECT_DOUBLE_EQ(with_bg.avg_recall, (0.0 + 1.0 + 0.5) / 3);
}

TEST(Metrics, BoundsAndPermutationInvariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelMap g = test::random_labels(11, 7, 6, rng), p = test::random_labels(11, 7, 6, rng);
    Confusion a(6);
    a.accumulate(p, g);
    const Metrics m = compute_metrics(a);
    EXPECT_GE(m.accuracy, 0.0);
    EXPECT_LE(m.accuracy, 1.0);
    for (int l = 0; l <= 6; ++l) {
      EXPECT_GE(m.f1[l], 0.0);
      EXPECT_LE(m.f1[l], 1.0);
      EXPECT_LE(m.f1[l], std::max(m.precision[l], m.recall[l]) + 1e-15);
    }
    std::vector<std::size_t> perm(g.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    LabelMap gs(7, 11), ps(7, 11);
    for (std::size_t i = 0; i < perm.size(); ++i) gs[i] = g[perm[i]], ps[i] = p[perm[i]];
    Confusion b(6);
    b.accumulate(ps, gs);
    const Metrics n = compute_metrics(b);
    EXPECT_EQ(m.accuracy, n.accuracy);
    EXPECT_EQ(m.f1, n.f1);
    EXPECT_EQ(m.avg_f1, n.avg_f1);
    EXPECT_EQ(m.avg_precision, n.avg_precision);
  }
}

TEST(Report, TableColumnOrderAndCsv) {
  Confusion c(2);
  c.accumulate(row({1, 2, 2, 0}), row({1, 1, 2, 0}));
  const Metrics m = compute_metrics(c);
  const std::string t = format_report(m, {"background", "a", "b"});
  const auto pos = [&](const char* s) { return t.find(s); };
  EXPECT_LT(pos("Accuracy"), pos("F.g. accuracy"));
  EXPECT_LT(pos("F.g. accuracy"), pos("Avg. precision"));
  EXPECT_LT(pos("Avg. precision"), pos("Avg. recall"));
  EXPECT_LT(pos("Avg. recall"), pos("Avg. F-1 score"));
  EXPECT_NE(t.find("75.00"), std::string::npos);
  const std::string csv = format_report_csv(m, {"background", "a", "b"});
  EXPECT_NE(csv.find(','), std::string::npos);
  EXPECT_NE(csv.find("75"), std::string::npos);
}
