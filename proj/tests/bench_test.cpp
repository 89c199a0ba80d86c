/**
 * @file bench_test.cpp
 * @brief bench: thinning, correspondence vs oracles, PR aggregation, emitters.
 */
#include <contourkit/bench.hpp>
#include <contourkit/rng.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <set>

using namespace ck;

namespace {

/// 8-connected component count of a binary plane.
int component_count(const ImagePlane& binary) {
  std::vector<char> seen(binary.size(), 0);
  int components = 0;
  for (int y = 0; y < binary.height; ++y)
    for (int x = 0; x < binary.width; ++x) {
      if (binary.at(y, x) <= 0.0f || seen[binary.index(y, x, 0)]) continue;
      ++components;
      std::vector<std::pair<int, int>> stack{{y, x}};
      seen[binary.index(y, x, 0)] = 1;
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy;
            const int nx = cx + dx;
            if (ny < 0 || ny >= binary.height || nx < 0 || nx >= binary.width) continue;
            if (binary.at(ny, nx) <= 0.0f || seen[binary.index(ny, nx, 0)]) continue;
            seen[binary.index(ny, nx, 0)] = 1;
            stack.push_back({ny, nx});
          }
      }
    }
  return components;
}

PixelList random_pixels(int size, int max_count, Rng& rng) {
  std::set<std::pair<int, int>> unique;
  const std::size_t want = rng.next_below(max_count + 1);
  while (unique.size() < want)
    unique.insert({static_cast<int>(rng.next_below(size)), static_cast<int>(rng.next_below(size))});
  PixelList list;
  for (const auto& [y, x] : unique) {
    list.ys.push_back(y);
    list.xs.push_back(x);
  }
  return list;
}

}  // namespace

TEST(Thin, AllBelowThresholdGivesEmptyMap) {
  const ImagePlane map(5, 5, 1, 0.2f);
  const ImagePlane out = threshold_and_thin(map, 0.5);
  for (const float v : out.data) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Thin, OnePixelLineIsUnchanged) {
  ImagePlane map(7, 7, 1, 0.0f);
  for (int x = 1; x < 6; ++x) map.at(3, x) = 0.9f;
  const ImagePlane out = threshold_and_thin(map, 0.5);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x)
      EXPECT_FLOAT_EQ(out.at(y, x), (y == 3 && x >= 1 && x < 6) ? 1.0f : 0.0f);
}

TEST(Thin, ThickBarReducesToSingleConnectedLine) {
  // 3-px-wide vertical bar, rows 0..19 at columns 1..3 of a 20x5 map
  ImagePlane map(20, 5, 1, 0.0f);
  for (int y = 0; y < 20; ++y)
    for (int x = 1; x <= 3; ++x) map.at(y, x) = 1.0f;
  const ImagePlane out = threshold_and_thin(map, 0.5);

  EXPECT_EQ(component_count(out), 1);
  int retained = 0;
  for (int y = 0; y < 20; ++y) {
    int row_count = 0;
    for (int x = 0; x < 5; ++x)
      if (out.at(y, x) > 0.0f) {
        ++row_count;
        EXPECT_EQ(x, 2) << "skeleton must sit on the bar's center column";
      }
    EXPECT_LE(row_count, 1);
    retained += row_count;
  }
  // the schedule erodes at most two rows from either end
  for (int y = 2; y <= 16; ++y) EXPECT_GT(out.at(y, 2), 0.0f) << "row " << y;
  EXPECT_GE(retained, 15);
}

TEST(Correspond, IdenticalMapsMatchFully) {
  ImagePlane det(6, 6, 1, 0.0f);
  det.at(1, 2) = det.at(3, 4) = det.at(5, 0) = 1.0f;
  const Correspondence m = correspond(det, det, 1.0);
  EXPECT_EQ(m.matched, 3);
  for (const char flag : m.det_matched) EXPECT_TRUE(flag);
}

TEST(Correspond, EmptyDetectionConvention) {
  const ImagePlane det(4, 4, 1, 0.0f);
  ImagePlane gt(4, 4, 1, 0.0f);
  gt.at(2, 2) = 1.0f;
  const auto table = evaluate_image(det, {gt}, {0.5}, 2.0);
  EXPECT_EQ(table.points[0].matched_det, 0);
  EXPECT_EQ(table.points[0].matched_gt, 0);
  EXPECT_DOUBLE_EQ(table.points[0].precision, 1.0);  // by convention
  EXPECT_DOUBLE_EQ(table.points[0].recall, 0.0);
}

TEST(Correspond, MatchedCountIsMonotoneInTolerance) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const PixelList a = random_pixels(8, 6, rng);
    const PixelList b = random_pixels(8, 6, rng);
    int prev = 0;
    for (const double tol : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      const int matched = correspond(a, b, tol).matched;
      EXPECT_GE(matched, prev);
      EXPECT_LE(matched, static_cast<int>(std::min(a.count(), b.count())));
      prev = matched;
    }
  }
}

TEST(Correspond, SwappingRolesPreservesMatchedCount) {
  Rng rng(18);
  for (int trial = 0; trial < 30; ++trial) {
    const PixelList a = random_pixels(8, 6, rng);
    const PixelList b = random_pixels(8, 6, rng);
    for (const Matcher m : {Matcher::greedy, Matcher::exact}) {
      EXPECT_EQ(correspond(a, b, 2.0, m).matched, correspond(b, a, 2.0, m).matched);
    }
  }
}

TEST(Correspond, ExactMatcherEqualsBruteForceOnTinySets) {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const PixelList a = random_pixels(6, 4, rng);
    const PixelList b = random_pixels(6, 4, rng);
    const double tol = 0.5 + rng.next_unit() * 4.0;
    const int exact = correspond(a, b, tol, Matcher::exact).matched;
    const int brute = test::brute_force_max_matching({a.ys, a.xs}, {b.ys, b.xs}, tol);
    EXPECT_EQ(exact, brute) << "trial " << trial;
  }
}

TEST(Correspond, GreedyNeverBeatsExactAndUsuallyTies) {
  Rng rng(20);
  int equal = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const PixelList a = random_pixels(8, 6, rng);
    const PixelList b = random_pixels(8, 6, rng);
    const double tol = 1.0 + rng.next_unit() * 3.0;
    const int greedy = correspond(a, b, tol, Matcher::greedy).matched;
    const int exact = correspond(a, b, tol, Matcher::exact).matched;
    ASSERT_LE(greedy, exact);
    if (greedy == exact) ++equal;
  }
  EXPECT_GE(equal, trials * 95 / 100);
}

TEST(EvaluateImage, PerfectDetectionAtEveryThreshold) {
  ImagePlane gt(9, 9, 1, 0.0f);
  for (int x = 1; x < 8; ++x) gt.at(4, x) = 1.0f;
  const auto table = evaluate_image(gt, {gt}, threshold_grid(9), 1.0);
  for (const auto& p : table.points) {
    EXPECT_DOUBLE_EQ(p.precision, 1.0) << p.threshold;
    EXPECT_DOUBLE_EQ(p.recall, 1.0) << p.threshold;
  }
}

TEST(EvaluateImage, TwoIdenticalAnnotatorsBothRecalled) {
  ImagePlane gt(9, 9, 1, 0.0f);
  for (int x = 1; x < 8; ++x) gt.at(4, x) = 1.0f;
  const auto table = evaluate_image(gt, {gt, gt}, {0.5}, 1.0);
  EXPECT_EQ(table.points[0].total_gt, 14);
  EXPECT_EQ(table.points[0].matched_gt, 14);
  EXPECT_DOUBLE_EQ(table.points[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(table.points[0].precision, 1.0);
}

TEST(EvaluateImage, OnePixelShiftWithinTolerance) {
  ImagePlane det(9, 9, 1, 0.0f);
  ImagePlane gt(9, 9, 1, 0.0f);
  for (int x = 1; x < 8; ++x) {
    det.at(4, x) = 1.0f;
    gt.at(5, x) = 1.0f;  // shifted one row
  }
  const auto table = evaluate_image(det, {gt}, {0.5}, 1.0);
  EXPECT_DOUBLE_EQ(table.points[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(table.points[0].recall, 1.0);
}

TEST(Summarize, SingleImageOisEqualsOds) {
  Rng rng(23);
  ImagePlane edge(16, 16, 1);
  for (auto& v : edge.data) v = static_cast<float>(rng.next_unit());
  ImagePlane gt(16, 16, 1, 0.0f);
  for (int x = 2; x < 14; ++x) gt.at(8, x) = 1.0f;
  const auto table = evaluate_image(edge, {gt}, threshold_grid(33), 1.5);
  const BenchReport report = summarize({table});
  EXPECT_NEAR(report.ois, report.ods, 1e-12);
}

TEST(Summarize, HandComputedApInterpolation) {
  // two PR points: (R=0.5, P=1.0) and (R=1.0, P=0.5) -> AP = 0.75
  ImagePrTable table;
  table.image_id = "synthetic";
  PRPoint p1;
  p1.threshold = 0.6;
  p1.matched_det = 50;
  p1.total_det = 50;
  p1.matched_gt = 50;
  p1.total_gt = 100;
  PRPoint p2;
  p2.threshold = 0.3;
  p2.matched_det = 100;
  p2.total_det = 200;
  p2.matched_gt = 100;
  p2.total_gt = 100;
  table.points = {p2, p1};
  const BenchReport report = summarize({table});
  EXPECT_NEAR(report.ap, 0.75, 1e-12);
}

TEST(Summarize, PerfectDetectorScoresOnes) {
  ImagePlane gt(9, 9, 1, 0.0f);
  for (int x = 1; x < 8; ++x) gt.at(4, x) = 1.0f;
  const auto table = evaluate_image(gt, {gt}, threshold_grid(99), 1.0);
  const BenchReport report = summarize({table});
  EXPECT_NEAR(report.ods, 1.0, 1e-9);
  EXPECT_NEAR(report.ois, 1.0, 1e-9);
  EXPECT_NEAR(report.ap, 1.0, 1e-9);
}

TEST(Summarize, ImageOrderPermutationIsByteIdentical) {
  Rng rng(29);
  std::vector<ImagePrTable> tables;
  for (int i = 0; i < 4; ++i) {
    ImagePlane edge(12, 12, 1);
    for (auto& v : edge.data) v = static_cast<float>(rng.next_unit());
    ImagePlane gt(12, 12, 1, 0.0f);
    for (int x = 1; x < 11; ++x) gt.at(3 + 2 * i, x) = 1.0f;
    tables.push_back(evaluate_image(edge, {gt}, threshold_grid(19), 1.5, Matcher::greedy,
                                    "img" + std::to_string(i)));
  }
  const BenchReport a = summarize(tables);
  std::vector<ImagePrTable> shuffled = {tables[2], tables[0], tables[3], tables[1]};
  const BenchReport b = summarize(shuffled);
  EXPECT_EQ(emit_pr_tsv(a), emit_pr_tsv(b));
  EXPECT_EQ(emit_summary_tsv(a), emit_summary_tsv(b));
}

TEST(Emitters, LayerTableMirrorsReferenceLayout) {
  const std::string table = emit_layer_table(
      {"Conv1", "Conv2", "Conv3", "Conv4", "Conv5", "Conv1-5"},
      {0.627, 0.699, 0.655, 0.654, 0.604, 0.741},
      {0.660, 0.718, 0.670, 0.667, 0.620, 0.759},
      {0.625, 0.712, 0.619, 0.615, 0.546, 0.757});
  const std::string expected =
      "\tConv1\tConv2\tConv3\tConv4\tConv5\tConv1-5\n"
      "ODS\t.627\t.699\t.655\t.654\t.604\t.741\n"
      "OIS\t.660\t.718\t.670\t.667\t.620\t.759\n"
      "AP\t.625\t.712\t.619\t.615\t.546\t.757\n";
  EXPECT_EQ(table, expected);
}

TEST(Summarize, EmptyDatasetIsContractError) {
  EXPECT_THROW(summarize({}), ContractError);
}
