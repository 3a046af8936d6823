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

#ifndef YOLO3D__TRAINER_HPP_
#define YOLO3D__TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "yolo3d/bev_rasterizer.hpp"
#include "yolo3d/box_geom.hpp"
#include "yolo3d/loss.hpp"
#include "yolo3d/micronet.hpp"
#include "yolo3d/rng.hpp"

namespace yolo3d
{

/// A run of epochs whose rate moves linearly from start_lr to end_lr
/// (constant when they are equal).
struct LrSegment
{
  int epochs = 0;
  double start_lr = 0.0;
  double end_lr = 0.0;
};

/// 10 warmup epochs 1e-5 -> 1e-4, then 90 at 1e-4, 30 at 5e-4, 20 at 5e-5.
std::vector<LrSegment> default_schedule();

struct TrainConfig
{
  int epochs = 150;
  int batch_size = 4;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<LrSegment> schedule = default_schedule();
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument unless the schedule spans add up to epochs.
  void validate() const;
};

/// Learning rate at a (possibly fractional) epoch. Throws std::out_of_range
/// outside [0, total epochs).
double lr_schedule(double epoch, std::span<const LrSegment> schedule);
double lr_schedule(double epoch);

/// v <- momentum * v - lr * (g + weight_decay * p); p <- p + v
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum, double weight_decay);

/// Rescales `grads` in place to at most `max_norm` in L2 norm and returns the
/// norm before rescaling. A non-positive max_norm leaves grads untouched.
double clip_gradient_norm(std::span<double> grads, double max_norm);

/// Nominal (w, l, h) used to draw synthetic objects.
Anchor nominal_dimensions(ClassId cls);

struct SyntheticScene
{
  PointCloud cloud;
  std::vector<Obb3D> labels;
  int requested_objects = 0;
};

/// Non-overlapping boxes of class-typical size and random yaw standing on a
/// ground plane, sampled on their top face and sides, plus ground clutter.
/// Objects that cannot be placed in 100 tries are left out.
SyntheticScene generate_synthetic_scene(Rng & rng, int n_objects, const GridConfig & grid);

/// Per-class anchors from label means, falling back to nominal_dimensions for
/// classes with no labels.
std::vector<Anchor> anchors_for(std::span<const Obb3D> labels);

/// Decodes every slot with sigmoid(t_conf) >= conf_threshold, then applies NMS.
std::vector<Obb3D> detect(const HeadTensor & raw, std::span<const Anchor> anchors,
                          const HeadConfig & head, const GridConfig & grid, double conf_threshold,
                          double nms_threshold);

struct ToyTrainConfig
{
  std::uint64_t seed = 0;
  int steps = 2000;
  int scenes = 4;
  int objects_per_scene = 3;
  /// 64 x 64 cells at 0.1 m.
  GridConfig grid{6.4, 3.2, 0.1, -2.0, 2.0};
  int pools = 3;
  int base_filters = 16;
  int convs = 5;
  /// The default schedule's shape is stretched over `steps` and every rate is
  /// multiplied by this factor.
  double lr_scale = 2.0;
  /// The batch gradient is rescaled to this L2 norm when it is longer; 0 disables.
  double max_grad_norm = 10.0;
  /// Initial sigmoid(t_conf) of every head slot.
  double confidence_prior = 0.01;
  TrainConfig optimizer{};
  LossWeights weights{};
  ConfTarget conf_target = ConfTarget::iou;
  int threads = 1;
  double divergence_threshold = 1e6;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct ToyTrainResult
{
  Network network;
  std::vector<LossBreakdown> log;
  std::vector<SyntheticScene> scenes;
  std::vector<GridMap> grids;
  std::vector<Anchor> anchors;
  HeadConfig head;
};

/// Overfits a fixed set of synthetic scenes. Each step averages the loss and
/// gradient over one batch; batch items may run on `threads` workers and are
/// reduced in a fixed order, so results do not depend on the thread count.
ToyTrainResult train_toy(const ToyTrainConfig & config);

/// Mean over labels of the best bev_iou achieved by any detection (0 when none).
double mean_best_iou(std::span<const Obb3D> labels, std::span<const Obb3D> detections);

}  // namespace yolo3d

#endif  // YOLO3D__TRAINER_HPP_
