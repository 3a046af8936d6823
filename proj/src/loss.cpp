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

#include "yolo3d/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace yolo3d
{
namespace
{

void check_shapes(const HeadTensor & raw, const TargetTensor & targets)
{
  if (raw.grid_side() != targets.head.grid_side ||
      raw.anchors_per_cell() != targets.head.anchors_per_cell ||
      raw.slot_count() != targets.slots.size() ||
      targets.anchors.size() != static_cast<std::size_t>(targets.head.anchors_per_cell)) {
    throw std::invalid_argument("head tensor shape does not match the targets");
  }
}

// One pass over every slot producing the term sums and, optionally, the gradient.
LossBreakdown evaluate(const HeadTensor & raw, const TargetTensor & targets,
                       const LossWeights & weights, std::span<const double> conf_targets,
                       HeadTensor * gradient)
{
  check_shapes(raw, targets);
  weights.validate();
  if (conf_targets.size() != raw.slot_count()) {
    throw std::invalid_argument("confidence target count does not match the head tensor");
  }
  if (gradient != nullptr) {
    *gradient = HeadTensor(raw.grid_side(), raw.anchors_per_cell());
  }

  const int side = raw.grid_side();
  const int anchors = raw.anchors_per_cell();
  LossBreakdown out;
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      for (int a = 0; a < anchors; ++a) {
        const std::size_t idx = raw.slot_index(row, col, a);
        const auto t = raw.slot(idx);
        const SlotTarget & target = targets.slots[idx];

        const double s_conf = sigmoid(t[kTconf]);
        const double conf_err = s_conf - conf_targets[idx];
        if (!target.obj) {
          out.conf_noobj_term += conf_err * conf_err;
          if (gradient != nullptr) {
            gradient->slot(idx)[kTconf] =
              weights.lambda_conf_noobj * 2.0 * conf_err * s_conf * (1.0 - s_conf);
          }
          continue;
        }
        out.conf_obj_term += conf_err * conf_err;

        const double sx = sigmoid(t[kTx]);
        const double sy = sigmoid(t[kTy]);
        const double sz = sigmoid(t[kTz]);
        const double ex = sx + col - target.x;
        const double ey = sy + row - target.y;
        const double ez = sz - target.z;
        out.coord_term += ex * ex + ey * ey + ez * ez;

        const Anchor & anchor = targets.anchors[static_cast<std::size_t>(a)];
        const double rw = std::sqrt(anchor.w * std::exp(t[kTw]));
        const double rl = std::sqrt(anchor.l * std::exp(t[kTl]));
        const double rh = std::sqrt(anchor.h * std::exp(t[kTh]));
        const double dw = rw - std::sqrt(target.w);
        const double dl = rl - std::sqrt(target.l);
        const double dh = rh - std::sqrt(target.h);
        out.dim_term += dw * dw + dl * dl + dh * dh;

        const double dphi = t[kTphi] - target.phi;
        out.yaw_term += dphi * dphi;

        std::array<double, kNumClasses> logits{};
        std::copy(t.begin() + kClassLogits, t.end(), logits.begin());
        const auto probs = softmax(logits);
        std::array<double, kNumClasses> class_err{};
        for (int c = 0; c < kNumClasses; ++c) {
          class_err[c] = probs[c] - target.class_one_hot[c];
          out.class_term += class_err[c] * class_err[c];
        }

        if (gradient == nullptr) {
          continue;
        }
        auto g = gradient->slot(idx);
        g[kTx] = weights.lambda_coor * 2.0 * ex * sx * (1.0 - sx);
        g[kTy] = weights.lambda_coor * 2.0 * ey * sy * (1.0 - sy);
        g[kTz] = weights.lambda_coor * 2.0 * ez * sz * (1.0 - sz);
        // d/dt (sqrt(p e^t) - c)^2 = (sqrt(p e^t) - c) * sqrt(p e^t)
        g[kTw] = weights.lambda_coor * dw * rw;
        g[kTl] = weights.lambda_coor * dl * rl;
        g[kTh] = weights.lambda_coor * dh * rh;
        g[kTphi] = weights.lambda_yaw * 2.0 * dphi;
        g[kTconf] = weights.lambda_conf_obj * 2.0 * conf_err * s_conf * (1.0 - s_conf);
        double weighted = 0.0;
        for (int c = 0; c < kNumClasses; ++c) {
          weighted += 2.0 * class_err[c] * probs[c];
        }
        for (int k = 0; k < kNumClasses; ++k) {
          g[kClassLogits + k] =
            weights.lambda_classes * probs[k] * (2.0 * class_err[k] - weighted);
        }
      }
    }
  }
  out.total = weights.lambda_coor * (out.coord_term + out.dim_term) +
              weights.lambda_yaw * out.yaw_term + weights.lambda_conf_obj * out.conf_obj_term +
              weights.lambda_conf_noobj * out.conf_noobj_term +
              weights.lambda_classes * out.class_term;
  return out;
}

}  // namespace

HeadTensor::HeadTensor(int grid_side, int anchors_per_cell)
: grid_side_(grid_side),
  anchors_(anchors_per_cell),
  values_(static_cast<std::size_t>(grid_side) * grid_side * anchors_per_cell * kValuesPerAnchor, 0.0)
{
  if (grid_side <= 0 || anchors_per_cell <= 0) {
    throw std::invalid_argument("head tensor dimensions must be positive");
  }
}

void HeadTensor::set_prediction(std::size_t index, const RawPrediction & raw)
{
  const auto values = raw.to_array();
  std::copy(values.begin(), values.end(), slot(index).begin());
}

void LossWeights::validate() const
{
  for (double w : {lambda_coor, lambda_yaw, lambda_conf_obj, lambda_conf_noobj, lambda_classes}) {
    if (!(w >= 0.0)) {
      throw std::invalid_argument("loss weights must be non-negative");
    }
  }
}

std::size_t TargetTensor::obj_count() const
{
  return static_cast<std::size_t>(
    std::count_if(slots.begin(), slots.end(), [](const SlotTarget & s) { return s.obj; }));
}

TargetTensor build_targets(std::span<const Obb3D> labels, std::span<const Anchor> anchors,
                           const HeadConfig & head, const GridConfig & grid)
{
  if (anchors.size() != static_cast<std::size_t>(head.anchors_per_cell)) {
    throw std::invalid_argument("anchor count must equal anchors_per_cell");
  }
  TargetTensor targets;
  targets.head = head;
  targets.grid = grid;
  targets.anchors.assign(anchors.begin(), anchors.end());
  const HeadTensor layout(head.grid_side, head.anchors_per_cell);
  targets.slots.resize(layout.slot_count());

  for (std::size_t li = 0; li < labels.size(); ++li) {
    const Obb3D & label = labels[li];
    EncodedBox enc;
    try {
      enc = encode(label, anchors.front(), head, grid);
    } catch (const std::exception & e) {
      targets.warnings.push_back("label " + std::to_string(li) + " skipped: " + e.what());
      continue;
    }

    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      Obb3D prior = label;
      prior.w = anchors[a].w;
      prior.l = anchors[a].l;
      prior.h = anchors[a].h;
      prior.yaw = 0.0;
      ranked.emplace_back(bev_iou(label, prior), a);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto & x, const auto & y) {
      return x.first > y.first;
    });

    bool assigned = false;
    for (const auto & [iou, a] : ranked) {
      const std::size_t idx =
        layout.slot_index(enc.cell.c_y, enc.cell.c_x, static_cast<int>(a));
      SlotTarget & slot = targets.slots[idx];
      if (slot.obj) {
        continue;
      }
      slot.obj = true;
      slot.x = enc.cell.c_x + enc.frac_x;
      slot.y = enc.cell.c_y + enc.frac_y;
      slot.z = enc.frac_z;
      slot.w = label.w;
      slot.l = label.l;
      slot.h = label.h;
      slot.phi = normalize_yaw(wrap_angle(label.yaw));
      slot.class_one_hot = {};
      slot.class_one_hot[class_index(label.class_id)] = 1.0;
      slot.truth = label;
      assigned = true;
      break;
    }
    if (!assigned) {
      targets.warnings.push_back(
        "label " + std::to_string(li) + " dropped: every anchor of its cell is taken");
    }
  }
  return targets;
}

std::vector<double> confidence_targets(const HeadTensor & raw, const TargetTensor & targets,
                                       ConfTarget mode)
{
  check_shapes(raw, targets);
  std::vector<double> out(raw.slot_count(), 0.0);
  const int side = raw.grid_side();
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      for (int a = 0; a < raw.anchors_per_cell(); ++a) {
        const std::size_t idx = raw.slot_index(row, col, a);
        const SlotTarget & target = targets.slots[idx];
        if (!target.obj) {
          continue;
        }
        if (mode == ConfTarget::one) {
          out[idx] = 1.0;
          continue;
        }
        const Obb3D predicted = decode(
          raw.prediction(idx), CellIndex{col, row, 0}, targets.anchors[static_cast<std::size_t>(a)],
          targets.head, targets.grid);
        out[idx] = bev_iou(predicted, target.truth);
      }
    }
  }
  return out;
}

LossBreakdown combined_loss(const HeadTensor & raw, const TargetTensor & targets,
                            const LossWeights & weights, std::span<const double> conf_targets)
{
  return evaluate(raw, targets, weights, conf_targets, nullptr);
}

LossBreakdown combined_loss(const HeadTensor & raw, const TargetTensor & targets,
                            const LossWeights & weights, ConfTarget mode)
{
  const auto conf = confidence_targets(raw, targets, mode);
  return evaluate(raw, targets, weights, conf, nullptr);
}

HeadTensor loss_gradient(const HeadTensor & raw, const TargetTensor & targets,
                         const LossWeights & weights, std::span<const double> conf_targets)
{
  HeadTensor gradient;
  evaluate(raw, targets, weights, conf_targets, &gradient);
  return gradient;
}

HeadTensor loss_gradient(const HeadTensor & raw, const TargetTensor & targets,
                         const LossWeights & weights, ConfTarget mode)
{
  const auto conf = confidence_targets(raw, targets, mode);
  return loss_gradient(raw, targets, weights, conf);
}

LossAndGradient loss_and_gradient(const HeadTensor & raw, const TargetTensor & targets,
                                  const LossWeights & weights, ConfTarget mode)
{
  const auto conf = confidence_targets(raw, targets, mode);
  LossAndGradient out;
  out.loss = evaluate(raw, targets, weights, conf, &out.gradient);
  return out;
}

std::string loss_csv_header() { return "step,total,coord,dim,yaw,conf_obj,conf_noobj,class"; }

std::string loss_csv_row(std::size_t step, const LossBreakdown & loss)
{
  char buffer[512];
  std::snprintf(
    buffer, sizeof(buffer), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", step, loss.total,
    loss.coord_term, loss.dim_term, loss.yaw_term, loss.conf_obj_term, loss.conf_noobj_term,
    loss.class_term);
  return buffer;
}

}  // namespace yolo3d
