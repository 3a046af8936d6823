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

#ifndef YOLO3D__BOX_GEOM_HPP_
#define YOLO3D__BOX_GEOM_HPP_

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "yolo3d/bev_rasterizer.hpp"
#include "yolo3d/types.hpp"

namespace yolo3d
{

/// Prior box dimensions (meters) the head predicts multiplicative corrections to.
struct Anchor
{
  double w = 1.0;
  double l = 1.0;
  double h = 1.0;
  ClassId class_id = ClassId::car;
};

/// Per-anchor head channel layout.
enum HeadField : int {
  kTx = 0,
  kTy,
  kTz,
  kTw,
  kTl,
  kTh,
  kTphi,
  kTconf,
  kClassLogits,
};

inline constexpr int kValuesPerAnchor = kClassLogits + kNumClasses;

/// Pre-activation outputs of one (cell, anchor) slot.
struct RawPrediction
{
  double t_x = 0.0;
  double t_y = 0.0;
  double t_z = 0.0;
  double t_w = 0.0;
  double t_l = 0.0;
  double t_h = 0.0;
  double t_phi = 0.0;
  double t_conf = 0.0;
  std::array<double, kNumClasses> class_logits{};

  std::array<double, kValuesPerAnchor> to_array() const;
  static RawPrediction from_array(std::span<const double, kValuesPerAnchor> values);
};

/// Output cell. c_x counts columns, c_y rows; there is a single vertical level.
struct CellIndex
{
  int c_x = 0;
  int c_y = 0;
  int c_z = 0;

  bool operator==(const CellIndex &) const = default;
};

struct HeadConfig
{
  int grid_side = 38;
  int anchors_per_cell = 3;
  int downsample = 16;

  static constexpr int classes() { return kNumClasses; }
  int channels() const { return anchors_per_cell * kValuesPerAnchor; }
  double cell_size(const GridConfig & grid) const { return grid.resolution * downsample; }
  /// Throws std::invalid_argument unless grid_side * downsample matches both
  /// grid dimensions.
  void validate(const GridConfig & grid) const;
};

double sigmoid(double t);
/// Inverse sigmoid; the argument must lie in (0, 1).
double logit(double p);
std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses> & logits);

/// Per-class mean (w, l, h), returned in the order of `classes`. Throws
/// std::invalid_argument naming any class without labels.
std::vector<Anchor> compute_anchors(std::span<const Obb3D> labels, std::span<const ClassId> classes);

/// Anchor file: one `class p_w p_l p_h` line per class.
std::string format_anchors(std::span<const Anchor> anchors);
std::vector<Anchor> parse_anchors_text(std::string_view text);
void write_anchor_file(const std::filesystem::path & path, std::span<const Anchor> anchors);
std::vector<Anchor> read_anchor_file(const std::filesystem::path & path);

double normalize_yaw(double phi);
double denormalize_yaw(double value);

/// World-space box for one slot. confidence = sigmoid(t_conf); class_id is the
/// softmax argmax; yaw comes from the linear output clamped to [-1, 1].
Obb3D decode(const RawPrediction & raw, const CellIndex & cell, const Anchor & anchor,
             const HeadConfig & head, const GridConfig & grid);

struct EncodedBox
{
  CellIndex cell;
  RawPrediction raw;
  /// Fractional offsets inside the cell after clamping, i.e. sigmoid(t_x) etc.
  double frac_x = 0.5;
  double frac_y = 0.5;
  double frac_z = 0.5;
};

/// Inverse of decode on the regression fields. Throws std::out_of_range when the
/// center lies outside the grid and std::invalid_argument for non-positive dims.
EncodedBox encode(const Obb3D & box, const Anchor & anchor, const HeadConfig & head,
                  const GridConfig & grid);

struct Vec2
{
  double x;
  double y;
};

/// Footprint corners in counter-clockwise order.
std::array<Vec2, 4> bev_corners(const Obb3D & box);

/// Area of the overlap of two box footprints.
double bev_intersection_area(const Obb3D & a, const Obb3D & b);
double bev_iou(const Obb3D & a, const Obb3D & b);
double iou_3d(const Obb3D & a, const Obb3D & b);

/// Greedy suppression by bev_iou > iou_threshold. Survivors come back in
/// descending confidence, ties resolved by input order.
std::vector<Obb3D> nms(std::span<const Obb3D> detections, double iou_threshold, bool per_class);

}  // namespace yolo3d

#endif  // YOLO3D__BOX_GEOM_HPP_
