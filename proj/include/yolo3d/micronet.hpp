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

#ifndef YOLO3D__MICRONET_HPP_
#define YOLO3D__MICRONET_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "yolo3d/bev_rasterizer.hpp"
#include "yolo3d/loss.hpp"

namespace yolo3d
{

enum class LayerKind : std::uint32_t { conv2d = 0, maxpool = 1, reshape = 2 };
enum class Activation : std::uint32_t { linear = 0, leaky_relu = 1 };

inline constexpr double kLeakySlope = 0.1;

struct LayerSpec
{
  LayerKind kind = LayerKind::conv2d;
  int filters = 0;
  /// Square kernel (conv) or window (pool) side.
  int kernel = 3;
  int stride = 1;
  /// Zero padding per side for conv; pools pad bottom/right by replication.
  int padding = 1;
  Activation activation = Activation::leaky_relu;

  static LayerSpec conv(int filters, int kernel, Activation act = Activation::leaky_relu);
  static LayerSpec maxpool(int size, int stride);
  static LayerSpec reshape();
};

struct NetworkSpec
{
  std::vector<LayerSpec> layers;
  int input_height = 608;
  int input_width = 608;
  int input_channels = 2;
  int anchors_per_cell = 3;

  int head_channels() const { return anchors_per_cell * kValuesPerAnchor; }
};

/// The detection backbone and head listed for the full-size model: 608x608x2 in,
/// 38x38x33 out.
NetworkSpec table1_spec();

/// Reduced network for desk-scale training: `convs` 3x3 stages, the first
/// `pools` of them followed by a stride-2 pool, then a 1x1 head.
NetworkSpec toy_spec(int input_side, int pools = 3, int base_filters = 16, int convs = 5);

struct Shape3
{
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const
  {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  bool operator==(const Shape3 &) const = default;
};

struct LayerShape
{
  std::string name;
  LayerSpec spec;
  Shape3 input;
  Shape3 output;
  std::size_t parameters = 0;
};

/// Shape chain of a spec, throwing std::invalid_argument naming the first
/// inconsistent layer.
std::vector<LayerShape> infer_shapes(const NetworkSpec & spec);

/// Human-readable per-layer table, ending with the reshaped head.
std::string format_shapes(const NetworkSpec & spec);

/// Channel-major (C, H, W) activation.
struct Tensor3
{
  Shape3 shape;
  std::vector<double> data;

  Tensor3() = default;
  explicit Tensor3(Shape3 s) : shape(s), data(s.size(), 0.0) {}

  double & at(int c, int y, int x)
  {
    return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }
  double at(int c, int y, int x) const
  {
    return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }
};

/// (height / 255, density) planes of a grid as a 2-channel input in [0, 1].
Tensor3 grid_to_tensor(const GridMap & grid);

/// Channel c = anchor * kValuesPerAnchor + field maps onto the head tensor.
HeadTensor head_from_output(const Tensor3 & output, int anchors_per_cell);
Tensor3 output_from_head(const HeadTensor & head);

class Network
{
public:
  Network(NetworkSpec spec, std::vector<LayerShape> shapes, std::vector<double> parameters);

  const NetworkSpec & spec() const { return spec_; }
  const std::vector<LayerShape> & shapes() const { return shapes_; }
  Shape3 output_shape() const { return shapes_.back().output; }

  std::span<double> parameters() { return parameters_; }
  std::span<const double> parameters() const { return parameters_; }
  std::size_t parameter_count() const { return parameters_.size(); }

  /// Intermediate values kept for backward.
  struct Trace
  {
    std::vector<Tensor3> inputs;
    std::vector<Tensor3> pre_activations;
    std::vector<std::vector<std::uint32_t>> argmax;
  };

  Tensor3 forward(const Tensor3 & input) const;
  Tensor3 forward(const Tensor3 & input, Trace & trace) const;

  /// Parameter gradients (same layout as parameters()) for an output gradient.
  std::vector<double> backward(const Trace & trace, const Tensor3 & output_gradient) const;

  /// Offset of layer i's weights in parameters(); biases follow them.
  std::size_t parameter_offset(std::size_t layer) const { return offsets_[layer]; }

private:
  NetworkSpec spec_;
  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> parameters_;
};

/// Weights drawn uniformly with a fan-in bound from the seeded "init" stream.
Network build_network(const NetworkSpec & spec, std::uint64_t seed);

/// Versioned little-endian file: "Y3DW", version, layer count, input shape and
/// anchors, then per layer its spec fields and float32 parameters.
/// Sets the head bias of every t_conf channel to logit(prior) so that training
/// starts from a low objectness everywhere.
void set_confidence_prior(Network & net, double prior);

void save_weights(const std::filesystem::path & path, const Network & net);
Network load_weights(const std::filesystem::path & path);

}  // namespace yolo3d

#endif  // YOLO3D__MICRONET_HPP_
