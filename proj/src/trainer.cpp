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

#include "yolo3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <thread>

namespace yolo3d
{
namespace
{

constexpr double kGroundZ = -1.7;
constexpr int kPlacementTries = 100;
constexpr double kPlacementGap = 0.3;

struct BatchItem
{
  LossBreakdown loss;
  std::vector<double> grads;
};

BatchItem run_item(const Network & net, const Tensor3 & input, const TargetTensor & targets,
                   const LossWeights & weights, ConfTarget mode)
{
  Network::Trace trace;
  const Tensor3 out = net.forward(input, trace);
  const HeadTensor head = head_from_output(out, net.spec().anchors_per_cell);
  LossAndGradient lg = loss_and_gradient(head, targets, weights, mode);
  BatchItem item;
  item.loss = lg.loss;
  item.grads = net.backward(trace, output_from_head(lg.gradient));
  return item;
}

void add_scaled(LossBreakdown & acc, const LossBreakdown & x, double s)
{
  acc.total += s * x.total;
  acc.coord_term += s * x.coord_term;
  acc.dim_term += s * x.dim_term;
  acc.yaw_term += s * x.yaw_term;
  acc.conf_obj_term += s * x.conf_obj_term;
  acc.conf_noobj_term += s * x.conf_noobj_term;
  acc.class_term += s * x.class_term;
}

}  // namespace

std::vector<LrSegment> default_schedule()
{
  return {{10, 1e-5, 1e-4}, {90, 1e-4, 1e-4}, {30, 5e-4, 5e-4}, {20, 5e-5, 5e-5}};
}

void TrainConfig::validate() const
{
  if (epochs <= 0 || batch_size <= 0) {
    throw std::invalid_argument("epochs and batch size must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1) and weight decay be non-negative");
  }
  int total = 0;
  for (const LrSegment & seg : schedule) {
    if (seg.epochs <= 0 || seg.start_lr < 0.0 || seg.end_lr < 0.0) {
      throw std::invalid_argument("schedule segments need positive spans and non-negative rates");
    }
    total += seg.epochs;
  }
  if (total != epochs) {
    throw std::invalid_argument(
      "schedule spans " + std::to_string(total) + " epochs, expected " + std::to_string(epochs));
  }
}

double lr_schedule(double epoch, std::span<const LrSegment> schedule)
{
  double start = 0.0;
  for (const LrSegment & seg : schedule) {
    const double end = start + seg.epochs;
    if (epoch >= start && epoch < end) {
      const double t = (epoch - start) / seg.epochs;
      return seg.start_lr + (seg.end_lr - seg.start_lr) * t;
    }
    start = end;
  }
  throw std::out_of_range("epoch " + std::to_string(epoch) + " is outside the schedule");
}

double lr_schedule(double epoch)
{
  static const std::vector<LrSegment> schedule = default_schedule();
  return lr_schedule(epoch, schedule);
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum, double weight_decay)
{
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] - lr * (grads[i] + weight_decay * params[i]);
    params[i] += velocity[i];
  }
}

double clip_gradient_norm(std::span<double> grads, double max_norm)
{
  double sum = 0.0;
  for (double g : grads) {
    sum += g * g;
  }
  const double norm = std::sqrt(sum);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double & g : grads) {
      g *= scale;
    }
  }
  return norm;
}

Anchor nominal_dimensions(ClassId cls)
{
  switch (cls) {
    case ClassId::car:
      return {1.6, 3.9, 1.56, cls};
    case ClassId::pedestrian:
      return {0.6, 0.8, 1.73, cls};
    case ClassId::cyclist:
      return {0.6, 1.76, 1.73, cls};
  }
  return {1.0, 1.0, 1.0, cls};
}

SyntheticScene generate_synthetic_scene(Rng & rng, int n_objects, const GridConfig & grid)
{
  if (n_objects < 0) {
    throw std::invalid_argument("object count must be non-negative");
  }
  grid.validate();
  SyntheticScene scene;
  scene.requested_objects = n_objects;

  for (int i = 0; i < n_objects; ++i) {
    const auto cls = kAllClasses[static_cast<std::size_t>(rng() % kNumClasses)];
    const Anchor dims = nominal_dimensions(cls);
    for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
      Obb3D box;
      box.class_id = cls;
      box.w = dims.w * uniform(rng, 0.9, 1.1);
      box.l = dims.l * uniform(rng, 0.9, 1.1);
      box.h = dims.h * uniform(rng, 0.9, 1.1);
      box.yaw = uniform(rng, -kPi, kPi);
      const double reach = 0.5 * std::hypot(box.w, box.l);
      const double x_lo = reach;
      const double x_hi = grid.x_range - reach;
      const double y_lo = -grid.y_half_range + reach;
      const double y_hi = grid.y_half_range - reach;
      if (x_hi <= x_lo || y_hi <= y_lo) {
        continue;
      }
      box.cx = uniform(rng, x_lo, x_hi);
      box.cy = uniform(rng, y_lo, y_hi);
      box.cz = kGroundZ + 0.5 * box.h;
      box.confidence = 1.0;

      Obb3D padded = box;
      padded.w += kPlacementGap;
      padded.l += kPlacementGap;
      const bool clear = std::none_of(scene.labels.begin(), scene.labels.end(), [&](const Obb3D & other) {
        Obb3D other_padded = other;
        other_padded.w += kPlacementGap;
        other_padded.l += kPlacementGap;
        return bev_intersection_area(padded, other_padded) > 0.0;
      });
      if (clear) {
        scene.labels.push_back(box);
        break;
      }
    }
  }

  auto emit = [&scene](double x, double y, double z) {
    scene.cloud.points.push_back(
      {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), 0.5F});
  };
  for (const Obb3D & box : scene.labels) {
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    auto place = [&](double along, double across, double z) {
      emit(box.cx + along * c - across * s, box.cy + along * s + across * c, z);
    };
    const double top = box.cz + 0.5 * box.h;
    const double bottom = box.cz - 0.5 * box.h;
    place(0.0, 0.0, top);
    // Roughly 80 returns per square meter on the roof.
    const int roof = std::max(4, static_cast<int>(80.0 * box.w * box.l));
    for (int k = 0; k < roof; ++k) {
      place(uniform(rng, -0.5, 0.5) * box.l, uniform(rng, -0.5, 0.5) * box.w, top - uniform(rng, 0.0, 0.05));
    }
    // Sides: 40 returns per meter of perimeter spread over the height.
    const double perimeter = 2.0 * (box.w + box.l);
    const int sides = std::max(8, static_cast<int>(40.0 * perimeter));
    for (int k = 0; k < sides; ++k) {
      double t = uniform(rng, 0.0, perimeter);
      double along = 0.0;
      double across = 0.0;
      if (t < box.l) {
        along = t - 0.5 * box.l;
        across = 0.5 * box.w;
      } else if ((t -= box.l) < box.w) {
        along = 0.5 * box.l;
        across = t - 0.5 * box.w;
      } else if ((t -= box.w) < box.l) {
        along = t - 0.5 * box.l;
        across = -0.5 * box.w;
      } else {
        t -= box.l;
        along = -0.5 * box.l;
        across = t - 0.5 * box.w;
      }
      place(along, across, uniform(rng, bottom + 0.2, top));
    }
  }
  // Ground clutter: about 4 returns per square meter.
  const double area = grid.x_range * 2.0 * grid.y_half_range;
  const int clutter = static_cast<int>(4.0 * area);
  for (int k = 0; k < clutter; ++k) {
    emit(
      uniform(rng, 0.0, grid.x_range), uniform(rng, -grid.y_half_range, grid.y_half_range),
      kGroundZ + uniform(rng, -0.03, 0.03));
  }
  return scene;
}

std::vector<Anchor> anchors_for(std::span<const Obb3D> labels)
{
  std::vector<Anchor> anchors;
  for (ClassId cls : kAllClasses) {
    const bool present = std::any_of(labels.begin(), labels.end(), [cls](const Obb3D & b) {
      return b.class_id == cls;
    });
    if (present) {
      const std::array<ClassId, 1> one{cls};
      anchors.push_back(compute_anchors(labels, one).front());
    } else {
      anchors.push_back(nominal_dimensions(cls));
    }
  }
  return anchors;
}

std::vector<Obb3D> detect(const HeadTensor & raw, std::span<const Anchor> anchors,
                          const HeadConfig & head, const GridConfig & grid, double conf_threshold,
                          double nms_threshold)
{
  std::vector<Obb3D> candidates;
  for (int row = 0; row < raw.grid_side(); ++row) {
    for (int col = 0; col < raw.grid_side(); ++col) {
      for (int a = 0; a < raw.anchors_per_cell(); ++a) {
        const RawPrediction p = raw.prediction(raw.slot_index(row, col, a));
        if (sigmoid(p.t_conf) < conf_threshold) {
          continue;
        }
        candidates.push_back(
          decode(p, CellIndex{col, row, 0}, anchors[static_cast<std::size_t>(a)], head, grid));
      }
    }
  }
  return nms(candidates, nms_threshold, false);
}

void ToyTrainConfig::validate() const
{
  if (steps <= 0 || scenes <= 0 || scenes > 16 || objects_per_scene < 0) {
    throw std::invalid_argument("toy training needs steps > 0 and 1..16 scenes");
  }
  if (threads <= 0) {
    throw std::invalid_argument("thread count must be positive");
  }
  if (!(lr_scale >= 0.0) || !(max_grad_norm >= 0.0)) {
    throw std::invalid_argument("lr_scale and max_grad_norm must be non-negative");
  }
  if (!(confidence_prior > 0.0 && confidence_prior < 1.0)) {
    throw std::invalid_argument("confidence_prior must lie in (0, 1)");
  }
  optimizer.validate();
  weights.validate();
  grid.validate();
}

ToyTrainResult train_toy(const ToyTrainConfig & config)
{
  config.validate();
  const int downsample = 1 << config.pools;
  const HeadConfig head{config.grid.rows() / downsample, 3, downsample};
  head.validate(config.grid);

  std::vector<SyntheticScene> scenes;
  std::vector<GridMap> grids;
  std::vector<Tensor3> inputs;
  std::vector<Obb3D> all_labels;
  Rng scene_rng = make_stream(config.seed, "scenes");
  for (int i = 0; i < config.scenes; ++i) {
    scenes.push_back(generate_synthetic_scene(scene_rng, config.objects_per_scene, config.grid));
    grids.push_back(rasterize(scenes.back().cloud, config.grid));
    inputs.push_back(grid_to_tensor(grids.back()));
    all_labels.insert(all_labels.end(), scenes.back().labels.begin(), scenes.back().labels.end());
  }
  const std::vector<Anchor> anchors = anchors_for(all_labels);
  std::vector<TargetTensor> targets;
  for (const SyntheticScene & scene : scenes) {
    targets.push_back(build_targets(scene.labels, anchors, head, config.grid));
  }

  Network net = build_network(
    toy_spec(config.grid.rows(), config.pools, config.base_filters, config.convs), config.seed);
  set_confidence_prior(net, config.confidence_prior);
  std::vector<double> velocity(net.parameter_count(), 0.0);
  const int batch = std::min(config.optimizer.batch_size, config.scenes);
  const double epochs_per_step = static_cast<double>(config.optimizer.epochs) / config.steps;

  std::vector<LossBreakdown> log;
  log.reserve(static_cast<std::size_t>(config.steps));
  std::vector<BatchItem> items(static_cast<std::size_t>(batch));
  for (int step = 0; step < config.steps; ++step) {
    std::vector<int> members(static_cast<std::size_t>(batch));
    for (int k = 0; k < batch; ++k) {
      members[static_cast<std::size_t>(k)] = (step * batch + k) % config.scenes;
    }
    auto work = [&](int worker) {
      for (int k = worker; k < batch; k += config.threads) {
        const auto scene = static_cast<std::size_t>(members[static_cast<std::size_t>(k)]);
        items[static_cast<std::size_t>(k)] =
          run_item(net, inputs[scene], targets[scene], config.weights, config.conf_target);
      }
    };
    if (config.threads == 1 || batch == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (int t = 0; t < std::min(config.threads, batch); ++t) {
        pool.emplace_back(work, t);
      }
    }

    LossBreakdown mean;
    std::vector<double> grads(net.parameter_count(), 0.0);
    const double inv = 1.0 / batch;
    for (const BatchItem & item : items) {
      add_scaled(mean, item.loss, inv);
      for (std::size_t p = 0; p < grads.size(); ++p) {
        grads[p] += inv * item.grads[p];
      }
    }
    log.push_back(mean);
    if (!std::isfinite(mean.total) || mean.total > config.divergence_threshold) {
      throw TrainingDiverged(
        "training diverged at step " + std::to_string(step) + ": total loss " +
        std::to_string(mean.total));
    }
    clip_gradient_norm(grads, config.max_grad_norm);
    const double lr =
      config.lr_scale * lr_schedule(step * epochs_per_step, config.optimizer.schedule);
    sgd_step(net.parameters(), grads, velocity, lr, config.optimizer.momentum,
             config.optimizer.weight_decay);
  }

  return ToyTrainResult{std::move(net), std::move(log), std::move(scenes), std::move(grids), anchors, head};
}

double mean_best_iou(std::span<const Obb3D> labels, std::span<const Obb3D> detections)
{
  if (labels.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (const Obb3D & label : labels) {
    double best = 0.0;
    for (const Obb3D & det : detections) {
      best = std::max(best, bev_iou(label, det));
    }
    sum += best;
  }
  return sum / static_cast<double>(labels.size());
}

}  // namespace yolo3d
