// Copyright 2026 The yolo3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_support.hpp"
#include "yolo3d/eval.hpp"

namespace yolo3d
{
namespace
{

Obb3D box(double cx, double cy, double w, double l, ClassId cls = ClassId::car, double conf = 1.0)
{
  Obb3D b;
  b.cx = cx;
  b.cy = cy;
  b.w = w;
  b.l = l;
  b.h = 1.5;
  b.class_id = cls;
  b.confidence = conf;
  return b;
}

// At yaw 0 the length lies along x and the width along y.
double aligned_iou(const Obb3D & a, const Obb3D & b)
{
  const double ix = std::max(0.0, std::min(a.cx + a.l / 2, b.cx + b.l / 2) - std::max(a.cx - a.l / 2, b.cx - b.l / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.w / 2, b.cy + b.w / 2) - std::max(a.cy - a.w / 2, b.cy - b.w / 2));
  const double inter = ix * iy;
  return inter / (a.w * a.l + b.w * b.l - inter);
}

struct Frame
{
  std::vector<Obb3D> dets;
  std::vector<Obb3D> gts;
};

// Greedy matching of the k most confident detections, recomputed from scratch for every k.
std::pair<std::size_t, std::size_t> brute_counts(const std::vector<Frame> & frames, double cutoff,
                                                 double threshold, std::size_t & positives)
{
  std::size_t tp = 0;
  std::size_t fp = 0;
  positives = 0;
  for (const Frame & f : frames) {
    positives += f.gts.size();
    std::vector<Obb3D> kept;
    for (const Obb3D & d : f.dets) {
      if (d.confidence >= cutoff) {
        kept.push_back(d);
      }
    }
    std::sort(kept.begin(), kept.end(), [](const Obb3D & a, const Obb3D & b) { return a.confidence > b.confidence; });
    std::vector<bool> used(f.gts.size(), false);
    for (const Obb3D & d : kept) {
      double best = -1.0;
      std::size_t arg = f.gts.size();
      for (std::size_t g = 0; g < f.gts.size(); ++g) {
        const double v = aligned_iou(d, f.gts[g]);
        if (!used[g] && v > best) {
          best = v;
          arg = g;
        }
      }
      if (arg < f.gts.size() && best >= threshold) {
        used[arg] = true;
        ++tp;
      } else {
        ++fp;
      }
    }
  }
  return {tp, fp};
}

double brute_ap11(const std::vector<Frame> & frames, double threshold)
{
  std::vector<double> cutoffs;
  for (const Frame & f : frames) {
    for (const Obb3D & d : f.dets) {
      cutoffs.push_back(d.confidence);
    }
  }
  std::vector<std::pair<double, double>> pr;
  for (double c : cutoffs) {
    std::size_t positives = 0;
    const auto [tp, fp] = brute_counts(frames, c, threshold, positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives);
    pr.emplace_back(precision, recall);
  }
  double sum = 0.0;
  for (int i = 0; i <= 10; ++i) {
    double best = 0.0;
    for (const auto & [p, r] : pr) {
      if (r >= i / 10.0) {
        best = std::max(best, p);
      }
    }
    sum += best;
  }
  return sum / 11.0;
}

std::vector<Frame> random_frames(Rng & rng)
{
  std::vector<Frame> frames(1 + rng() % 4);
  for (Frame & f : frames) {
    const int n_gt = static_cast<int>(rng() % 6);
    for (int g = 0; g < n_gt; ++g) {
      f.gts.push_back(box(uniform(rng, 0, 30), uniform(rng, -10, 10), uniform(rng, 1.4, 2.0), uniform(rng, 3.5, 4.5)));
    }
    const int n_det = static_cast<int>(rng() % 8);
    for (int d = 0; d < n_det; ++d) {
      Obb3D det;
      if (!f.gts.empty() && rng() % 3 != 0) {
        det = f.gts[rng() % f.gts.size()];
        det.cx += uniform(rng, -1.5, 1.5);
        det.cy += uniform(rng, -0.8, 0.8);
      } else {
        det = box(uniform(rng, 0, 30), uniform(rng, -10, 10), 1.7, 4.0);
      }
      det.confidence = uniform(rng, 0.01, 0.99);
      f.dets.push_back(det);
    }
  }
  return frames;
}

TEST(Match, GreedyByConfidence)
{
  const std::vector<Obb3D> gts{box(10, 0, 2, 4), box(20, 0, 2, 4)};
  const std::vector<Obb3D> dets{box(10, 0, 2, 4, ClassId::car, 0.6), box(10.2, 0, 2, 4, ClassId::car, 0.9),
                                box(50, 0, 2, 4, ClassId::car, 0.8), box(10, 0, 0.6, 0.8, ClassId::pedestrian, 0.9)};
  const MatchResult m = match_detections(dets, gts, 0.5, ClassId::car);
  EXPECT_EQ(m.confidences, (std::vector<double>{0.9, 0.8, 0.6}));
  EXPECT_EQ(m.true_positive, (std::vector<bool>{true, false, false}));
  EXPECT_EQ(m.false_negatives, 1U);
  EXPECT_EQ(m.ground_truths, 2U);
}

TEST(Match, NoDetectionsAllMissed)
{
  const std::vector<Obb3D> gts{box(10, 0, 2, 4)};
  const MatchResult m = match_detections({}, gts, 0.5, ClassId::car);
  EXPECT_EQ(m.tp_count(), 0U);
  EXPECT_EQ(m.false_negatives, 1U);
}

TEST(PrecisionRecall, Counts)
{
  const PRPoint p = precision_recall(94, 6, 19);
  EXPECT_DOUBLE_EQ(p.precision, 0.94);
  EXPECT_NEAR(p.recall, 0.832, 5e-4);
  EXPECT_EQ(precision_recall(0, 0, 0).precision, 0.0);
  EXPECT_EQ(precision_recall(0, 0, 0).recall, 0.0);
}

TEST(PrecisionRecall, MatchesBruteForceExactly)
{
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = make_stream(seed, "pr");
    const auto frames = random_frames(rng);
    std::vector<MatchResult> matches;
    for (const Frame & f : frames) {
      matches.push_back(match_detections(f.dets, f.gts, 0.5, ClassId::car));
    }
    std::size_t positives = 0;
    const auto [tp, fp] = brute_counts(frames, 0.0, 0.5, positives);
    const PRPoint p = precision_recall(matches);
    ASSERT_EQ(p.tp, tp);
    ASSERT_EQ(p.fp, fp);
    ASSERT_EQ(p.precision, tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp));
    ASSERT_EQ(p.recall, positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives));
  }
}

TEST(AveragePrecision, ElevenPointMatchesBruteForceExactly)
{
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = make_stream(seed, "ap");
    const auto frames = random_frames(rng);
    for (double threshold : {0.3, 0.5, 0.7}) {
      std::vector<MatchResult> matches;
      for (const Frame & f : frames) {
        matches.push_back(match_detections(f.dets, f.gts, threshold, ClassId::car));
      }
      const auto curve = pr_curve(matches);
      ASSERT_EQ(average_precision(curve, 11), brute_ap11(frames, threshold)) << "seed " << seed;
    }
  }
}

TEST(AveragePrecision, PerfectAndEmpty)
{
  PRPoint perfect;
  perfect.precision = 1.0;
  perfect.recall = 1.0;
  const std::vector<PRPoint> curve{perfect};
  EXPECT_DOUBLE_EQ(average_precision(curve, 11), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(curve, 40), 1.0);
  EXPECT_EQ(average_precision(std::vector<PRPoint>{}, 11), 0.0);
  EXPECT_THROW(average_precision(curve, 7), std::invalid_argument);
}

TEST(AveragePrecision, HalfRecallHalfCredit)
{
  PRPoint half;
  half.precision = 1.0;
  half.recall = 0.5;
  const std::vector<PRPoint> curve{half};
  // Levels 0.0 .. 0.5 are reached.
  EXPECT_DOUBLE_EQ(average_precision(curve, 11), 6.0 / 11.0);
  // Levels 1/40 .. 20/40.
  EXPECT_DOUBLE_EQ(average_precision(curve, 40), 0.5);
}

TEST(AveragePrecision, BoundedInUnitInterval)
{
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = make_stream(seed, "bounds");
    const auto frames = random_frames(rng);
    std::vector<MatchResult> matches;
    for (const Frame & f : frames) {
      matches.push_back(match_detections(f.dets, f.gts, 0.5, ClassId::car));
    }
    const double ap = average_precision(pr_curve(matches), 40);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(MapOverThresholds, SeparatedSceneIsMonotone)
{
  std::vector<DetectionSet> gts{{"a", {box(10, 0, 2, 4), box(20, 5, 0.6, 0.8, ClassId::pedestrian)}}};
  std::vector<DetectionSet> dets{{"a", {box(10.5, 0.1, 2, 4, ClassId::car, 0.9),
                                         box(20.1, 5.05, 0.6, 0.8, ClassId::pedestrian, 0.7)}}};
  const std::vector<double> thresholds{0.1, 0.3, 0.5, 0.7, 0.9};
  const ApCurves curves = map_over_thresholds(dets, gts, thresholds);
  EXPECT_EQ(curves.ground_truths[class_index(ClassId::cyclist)], 0U);
  for (std::size_t t = 1; t < thresholds.size(); ++t) {
    EXPECT_LE(curves.mean_ap(t), curves.mean_ap(t - 1));
  }
  EXPECT_DOUBLE_EQ(curves.mean_ap(0), 1.0);
  EXPECT_DOUBLE_EQ(curves.ap[class_index(ClassId::car)][4], 0.0);
  EXPECT_THROW(map_over_thresholds(dets, gts, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(MapOverThresholds, FrameOnlyInDetectionsCountsAsFalsePositive)
{
  std::vector<DetectionSet> gts{{"a", {box(10, 0, 2, 4)}}};
  std::vector<DetectionSet> dets{{"a", {box(10, 0, 2, 4, ClassId::car, 0.5)}},
                                 {"b", {box(10, 0, 2, 4, ClassId::car, 0.9)}}};
  const std::vector<double> thresholds{0.5};
  const ApCurves curves = map_over_thresholds(dets, gts, thresholds);
  // Precision at full recall is one half.
  EXPECT_DOUBLE_EQ(curves.ap[class_index(ClassId::car)][0], 5.5 / 11.0);
}

TEST(DetectionsIo, RoundTrip)
{
  Rng rng = make_stream(3, "io");
  std::vector<DetectionSet> sets{{"000001", {}}, {"000002", {}}};
  for (int i = 0; i < 10; ++i) {
    Obb3D b = test::random_box(rng);
    b.class_id = kAllClasses[static_cast<std::size_t>(i % 3)];
    b.confidence = uniform(rng, 0, 1);
    sets[static_cast<std::size_t>(i % 2)].boxes.push_back(b);
  }
  const auto parsed = parse_detections_text(format_detections(sets));
  ASSERT_EQ(parsed.size(), 2U);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(parsed[s].frame, sets[s].frame);
    ASSERT_EQ(parsed[s].boxes.size(), sets[s].boxes.size());
    for (std::size_t i = 0; i < parsed[s].boxes.size(); ++i) {
      const Obb3D & a = parsed[s].boxes[i];
      const Obb3D & b = sets[s].boxes[i];
      EXPECT_EQ(a.class_id, b.class_id);
      EXPECT_LT(test::relative_error(a.cx, b.cx), 1e-8);
      EXPECT_LT(test::relative_error(a.yaw, b.yaw), 1e-8);
      EXPECT_LT(test::relative_error(a.confidence, b.confidence), 1e-8);
    }
  }
}

TEST(DetectionsIo, Errors)
{
  EXPECT_THROW(parse_detections_text("f Car 0.5 1 2 3\n"), FormatError);
  EXPECT_THROW(parse_detections_text("f Truck 0.5 1 2 3 1 1 1 0\n"), FormatError);
  EXPECT_THROW(parse_detections_text("f Car 1.5 1 2 3 1 1 1 0\n"), FormatError);
  EXPECT_TRUE(parse_detections_text("# comment\n\n").empty());
  EXPECT_THROW(read_detections("/nonexistent/dets.txt"), std::runtime_error);
}

TEST(Fit, RecoversExactInverseSquare)
{
  const std::vector<double> r{0.25, 0.2, 0.15, 0.1};
  std::vector<double> t;
  for (double v : r) {
    t.push_back(3.0 / (v * v) + 2.0);
  }
  const QuadraticFit fit = fit_inverse_square(r, t);
  EXPECT_NEAR(fit.a, 3.0, 1e-9);
  EXPECT_NEAR(fit.c, 2.0, 1e-9);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(Fit, LinearInResolutionFitsWorse)
{
  const std::vector<double> r{0.25, 0.2, 0.15, 0.1};
  const std::vector<double> t{4.0, 3.0, 2.0, 1.0};
  EXPECT_LT(fit_inverse_square(r, t).r2, 0.9);
  EXPECT_THROW(fit_inverse_square(std::vector<double>{0.1}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Bench, GridSidesAndRecords)
{
  PointCloud cloud;
  cloud.points.push_back({10.0F, 0.0F, 0.0F, 0.5F});
  const std::vector<double> res{0.25, 0.2, 0.15, 0.1};
  const BenchResult result = bench_resolution_sweep(cloud, res, GridConfig{}, nullptr, 3, 0);
  ASSERT_EQ(result.records.size(), 4U);
  EXPECT_EQ(result.records[0].grid_side, 243);
  EXPECT_EQ(result.records[1].grid_side, 304);
  EXPECT_EQ(result.records[2].grid_side, 405);
  EXPECT_EQ(result.records[3].grid_side, 608);
  for (const BenchRecord & r : result.records) {
    EXPECT_GE(r.median_ms, 0.0);
  }
  const std::string csv = format_bench_csv(result);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(render_bench_chart(result).find("<svg"), std::string::npos);
}

TEST(Charts, EscapesAndLists)
{
  const std::vector<ChartSeries> series{{"a<b", {0, 1}, {0, 1}}};
  const std::string svg = render_line_chart("t&t", "x", "y", series);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_NE(svg.find("t&amp;t"), std::string::npos);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
}

}  // namespace
}  // namespace yolo3d
