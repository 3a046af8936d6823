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

#ifndef YOLO3D__LOSS_HPP_
#define YOLO3D__LOSS_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "yolo3d/bev_rasterizer.hpp"
#include "yolo3d/box_geom.hpp"
#include "yolo3d/types.hpp"

namespace yolo3d
{

/// Raw head outputs laid out as [row][col][anchor][field], the channel-last
/// S x S x B x (8 + classes) view of the detection head.
class HeadTensor
{
public:
  HeadTensor() = default;
  HeadTensor(int grid_side, int anchors_per_cell);

  int grid_side() const { return grid_side_; }
  int anchors_per_cell() const { return anchors_; }
  std::size_t slot_count() const { return static_cast<std::size_t>(grid_side_) * grid_side_ * anchors_; }

  std::size_t slot_index(int row, int col, int anchor) const
  {
    return (static_cast<std::size_t>(row) * grid_side_ + col) * anchors_ + anchor;
  }

  double & at(int row, int col, int anchor, int field)
  {
    return values_[slot_index(row, col, anchor) * kValuesPerAnchor + field];
  }
  double at(int row, int col, int anchor, int field) const
  {
    return values_[slot_index(row, col, anchor) * kValuesPerAnchor + field];
  }

  std::span<double, kValuesPerAnchor> slot(std::size_t index)
  {
    return std::span<double, kValuesPerAnchor>(values_.data() + index * kValuesPerAnchor, kValuesPerAnchor);
  }
  std::span<const double, kValuesPerAnchor> slot(std::size_t index) const
  {
    return std::span<const double, kValuesPerAnchor>(
      values_.data() + index * kValuesPerAnchor, kValuesPerAnchor);
  }

  RawPrediction prediction(std::size_t index) const { return RawPrediction::from_array(slot(index)); }
  void set_prediction(std::size_t index, const RawPrediction & raw);

  std::vector<double> & values() { return values_; }
  const std::vector<double> & values() const { return values_; }

private:
  int grid_side_ = 0;
  int anchors_ = 0;
  std::vector<double> values_;
};

struct LossWeights
{
  double lambda_coor = 5.0;
  double lambda_yaw = 1.0;
  double lambda_conf_obj = 1.0;
  double lambda_conf_noobj = 0.5;
  double lambda_classes = 1.0;

  /// Throws std::invalid_argument if any weight is negative.
  void validate() const;
};

/// How the objectness target of a responsible slot is formed.
enum class ConfTarget {
  /// bev_iou(decoded prediction, ground truth), held constant for the gradient.
  iou,
  one,
};

struct SlotTarget
{
  bool obj = false;
  /// Center in output-cell units: c_x + offset, c_y + offset, vertical offset.
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  /// Meters.
  double w = 0.0;
  double l = 0.0;
  double h = 0.0;
  /// yaw / pi.
  double phi = 0.0;
  std::array<double, kNumClasses> class_one_hot{};
  Obb3D truth;
};

struct TargetTensor
{
  HeadConfig head;
  GridConfig grid;
  /// Anchor j of every cell.
  std::vector<Anchor> anchors;
  /// Indexed like HeadTensor::slot_index.
  std::vector<SlotTarget> slots;
  std::vector<std::string> warnings;

  std::size_t obj_count() const;
};

/// Assigns each label to the cell containing its center and, within it, to the
/// free anchor with the highest bev_iou against a yaw-0 anchor box at the label
/// center. Out-of-grid labels and labels that find no free anchor are reported
/// in `warnings` and left out.
TargetTensor build_targets(std::span<const Obb3D> labels, std::span<const Anchor> anchors,
                           const HeadConfig & head, const GridConfig & grid);

/// Raw term sums; `total` applies the weights (lambda_coor scales both coord and dim).
struct LossBreakdown
{
  double total = 0.0;
  double coord_term = 0.0;
  double dim_term = 0.0;
  double yaw_term = 0.0;
  double conf_obj_term = 0.0;
  double conf_noobj_term = 0.0;
  double class_term = 0.0;
};

/// Objectness targets per slot: 0 on unassigned slots.
std::vector<double> confidence_targets(const HeadTensor & raw, const TargetTensor & targets,
                                       ConfTarget mode);

LossBreakdown combined_loss(const HeadTensor & raw, const TargetTensor & targets,
                            const LossWeights & weights, std::span<const double> conf_targets);
LossBreakdown combined_loss(const HeadTensor & raw, const TargetTensor & targets,
                            const LossWeights & weights, ConfTarget mode = ConfTarget::iou);

/// d total / d raw, with the objectness targets treated as constants.
HeadTensor loss_gradient(const HeadTensor & raw, const TargetTensor & targets,
                         const LossWeights & weights, std::span<const double> conf_targets);
HeadTensor loss_gradient(const HeadTensor & raw, const TargetTensor & targets,
                         const LossWeights & weights, ConfTarget mode = ConfTarget::iou);

struct LossAndGradient
{
  LossBreakdown loss;
  HeadTensor gradient;
};

LossAndGradient loss_and_gradient(const HeadTensor & raw, const TargetTensor & targets,
                                  const LossWeights & weights, ConfTarget mode = ConfTarget::iou);

/// `step,total,coord,dim,yaw,conf_obj,conf_noobj,class`
std::string loss_csv_header();
std::string loss_csv_row(std::size_t step, const LossBreakdown & loss);

}  // namespace yolo3d

#endif  // YOLO3D__LOSS_HPP_
