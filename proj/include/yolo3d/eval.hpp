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

#ifndef YOLO3D__EVAL_HPP_
#define YOLO3D__EVAL_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "yolo3d/bev_rasterizer.hpp"
#include "yolo3d/box_geom.hpp"
#include "yolo3d/micronet.hpp"
#include "yolo3d/types.hpp"

namespace yolo3d
{

struct DetectionSet
{
  std::string frame;
  std::vector<Obb3D> boxes;
};

/// Lines of `frame class conf cx cy cz w l h yaw`; frames keep first-seen order.
std::vector<DetectionSet> parse_detections_text(std::string_view text);
std::vector<DetectionSet> read_detections(const std::filesystem::path & path);
std::string format_detections(std::span<const DetectionSet> sets);
void write_detections(const std::filesystem::path & path, std::span<const DetectionSet> sets);

enum class IouKind { bev, three_d };

double box_iou(const Obb3D & a, const Obb3D & b, IouKind kind);

struct MatchResult
{
  /// Confidences of the class's detections in descending order (stable on ties).
  std::vector<double> confidences;
  /// Parallel to confidences.
  std::vector<bool> true_positive;
  std::size_t false_negatives = 0;
  std::size_t ground_truths = 0;

  std::size_t tp_count() const;
  std::size_t fp_count() const;
};

/// Greedy matching of one frame's `cls` detections against its labels: each
/// detection, highest confidence first, takes the unmatched label of the same
/// class with the highest IoU if that IoU reaches the threshold.
MatchResult match_detections(std::span<const Obb3D> detections, std::span<const Obb3D> labels,
                             double iou_threshold, ClassId cls, IouKind kind = IouKind::bev);

struct PRPoint
{
  /// Confidence of the last detection counted.
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

/// precision = TP / (TP + FP), recall = TP / (TP + FN); 0 for empty denominators.
PRPoint precision_recall(std::size_t tp, std::size_t fp, std::size_t fn);
PRPoint precision_recall(std::span<const MatchResult> matches);

/// One point per detection after pooling all frames and sorting by confidence.
std::vector<PRPoint> pr_curve(std::span<const MatchResult> matches);

/// Interpolated AP: the mean over recall levels r of the best precision at
/// recall >= r. 11 points use r = 0, 0.1, ..., 1; 40 points use r = 1/40, ..., 1.
double average_precision(std::span<const PRPoint> curve, int points = 11);

struct ApCurves
{
  std::vector<double> thresholds;
  /// ap[class][threshold index]
  std::array<std::vector<double>, kNumClasses> ap;
  std::array<std::size_t, kNumClasses> ground_truths{};

  /// Mean over classes that have ground truth at one threshold.
  double mean_ap(std::size_t threshold_index) const;
};

/// Frames are paired by id; a detection frame with no label frame counts as
/// having no labels.
ApCurves map_over_thresholds(std::span<const DetectionSet> detections,
                             std::span<const DetectionSet> labels,
                             std::span<const double> thresholds, IouKind kind = IouKind::bev,
                             int ap_points = 11);

/// `class,threshold,ap`
std::string format_ap_csv(const ApCurves & curves);

struct ChartSeries
{
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart.
std::string render_line_chart(std::string_view title, std::string_view x_label,
                              std::string_view y_label, std::span<const ChartSeries> series);

std::string render_ap_chart(const ApCurves & curves);

struct BenchRecord
{
  double resolution = 0.0;
  int grid_side = 0;
  double median_ms = 0.0;
};

struct BenchResult
{
  std::vector<BenchRecord> records;
  /// t = fit_a * (1 / r)^2 + fit_c
  double fit_a = 0.0;
  double fit_c = 0.0;
  double r2 = 0.0;
};

struct QuadraticFit
{
  double a = 0.0;
  double c = 0.0;
  double r2 = 0.0;
};

/// Least squares for t = a * (1/r)^2 + c.
QuadraticFit fit_inverse_square(std::span<const double> resolutions, std::span<const double> times);

/// Times rasterization, and a forward pass of `network` (input side replaced
/// per resolution) when given; the median of `runs` timed runs after `warmup`
/// untimed ones. Runs on the calling thread only.
BenchResult bench_resolution_sweep(const PointCloud & cloud, std::span<const double> resolutions,
                                   const GridConfig & base, const NetworkSpec * network,
                                   int runs = 20, int warmup = 2, std::uint64_t seed = 0);

/// `resolution,grid_side,median_ms,fit_a,fit_c,r2`
std::string format_bench_csv(const BenchResult & result);
std::string render_bench_chart(const BenchResult & result);

}  // namespace yolo3d

#endif  // YOLO3D__EVAL_HPP_
