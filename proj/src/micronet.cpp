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

#include "yolo3d/micronet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "yolo3d/rng.hpp"

namespace yolo3d
{
namespace
{

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

constexpr std::array<char, 4> kWeightsMagic{'Y', '3', 'D', 'W'};
constexpr std::uint32_t kWeightsVersion = 1;

std::string layer_name(const LayerSpec & spec, std::size_t index)
{
  switch (spec.kind) {
    case LayerKind::conv2d:
      return "conv2d[" + std::to_string(index) + "]";
    case LayerKind::maxpool:
      return "maxpool[" + std::to_string(index) + "]";
    case LayerKind::reshape:
      return "reshape[" + std::to_string(index) + "]";
  }
  return "layer[" + std::to_string(index) + "]";
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Rows are (input channel, ky, kx); columns are output pixels.
RowMatrix im2col(const Tensor3 & in, int kernel, int padding)
{
  const int h = in.shape.height;
  const int w = in.shape.width;
  RowMatrix cols = RowMatrix::Zero(
    static_cast<Eigen::Index>(in.shape.channels) * kernel * kernel, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < in.shape.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        double * dst = cols.row(r).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - padding;
          if (sy < 0 || sy >= h) {
            continue;
          }
          const double * src = in.data.data() + (static_cast<std::size_t>(c) * h + sy) * w;
          const int x_lo = std::max(0, padding - kx);
          const int x_hi = std::min(w, w + padding - kx);
          for (int x = x_lo; x < x_hi; ++x) {
            dst[static_cast<std::size_t>(y) * w + x] = src[x + kx - padding];
          }
        }
      }
    }
  }
  return cols;
}

void col2im(const RowMatrix & cols, int kernel, int padding, Tensor3 & out)
{
  const int h = out.shape.height;
  const int w = out.shape.width;
  for (int c = 0; c < out.shape.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        const double * src = cols.row(r).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - padding;
          if (sy < 0 || sy >= h) {
            continue;
          }
          double * dst = out.data.data() + (static_cast<std::size_t>(c) * h + sy) * w;
          const int x_lo = std::max(0, padding - kx);
          const int x_hi = std::min(w, w + padding - kx);
          for (int x = x_lo; x < x_hi; ++x) {
            dst[x + kx - padding] += src[static_cast<std::size_t>(y) * w + x];
          }
        }
      }
    }
  }
}

void put_u32(std::ostream & out, std::uint32_t v)
{
  std::array<unsigned char, 4> b{
    static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char *>(b.data()), 4);
}

std::uint32_t get_u32(std::istream & in)
{
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char *>(b.data()), 4)) {
    throw FormatError("weights file is truncated");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_i32(std::ostream & out, int v) { put_u32(out, static_cast<std::uint32_t>(v)); }
int get_i32(std::istream & in) { return static_cast<int>(get_u32(in)); }

}  // namespace

LayerSpec LayerSpec::conv(int filters, int kernel, Activation act)
{
  return {LayerKind::conv2d, filters, kernel, 1, kernel / 2, act};
}

LayerSpec LayerSpec::maxpool(int size, int stride)
{
  return {LayerKind::maxpool, 0, size, stride, size - 1, Activation::linear};
}

LayerSpec LayerSpec::reshape() { return {LayerKind::reshape, 0, 1, 1, 0, Activation::linear}; }

NetworkSpec table1_spec()
{
  NetworkSpec spec;
  spec.input_height = 608;
  spec.input_width = 608;
  spec.input_channels = 2;
  spec.anchors_per_cell = 3;
  auto & l = spec.layers;
  l.push_back(LayerSpec::conv(32, 3));
  l.push_back(LayerSpec::maxpool(2, 2));
  l.push_back(LayerSpec::conv(64, 3));
  l.push_back(LayerSpec::maxpool(2, 2));
  l.push_back(LayerSpec::conv(128, 3));
  l.push_back(LayerSpec::conv(64, 3));
  l.push_back(LayerSpec::conv(128, 3));
  l.push_back(LayerSpec::maxpool(2, 1));
  l.push_back(LayerSpec::conv(256, 3));
  l.push_back(LayerSpec::conv(128, 3));
  l.push_back(LayerSpec::conv(256, 3));
  l.push_back(LayerSpec::maxpool(2, 2));
  l.push_back(LayerSpec::conv(512, 3));
  l.push_back(LayerSpec::conv(256, 1));
  l.push_back(LayerSpec::conv(512, 3));
  l.push_back(LayerSpec::conv(256, 1));
  l.push_back(LayerSpec::conv(512, 3));
  l.push_back(LayerSpec::maxpool(2, 2));
  l.push_back(LayerSpec::conv(1024, 3));
  l.push_back(LayerSpec::conv(512, 1));
  l.push_back(LayerSpec::conv(1024, 3));
  l.push_back(LayerSpec::conv(512, 1));
  l.push_back(LayerSpec::conv(1024, 3));
  l.push_back(LayerSpec::conv(1024, 3));
  l.push_back(LayerSpec::conv(1024, 3));
  l.push_back(LayerSpec::conv(1024, 3));
  l.push_back(LayerSpec::conv(spec.head_channels(), 1, Activation::linear));
  l.push_back(LayerSpec::reshape());
  return spec;
}

NetworkSpec toy_spec(int input_side, int pools, int base_filters, int convs)
{
  if (convs < pools) {
    throw std::invalid_argument("toy network needs at least one conv per pool");
  }
  NetworkSpec spec;
  spec.input_height = input_side;
  spec.input_width = input_side;
  spec.input_channels = 2;
  spec.anchors_per_cell = 3;
  for (int i = 0; i < convs; ++i) {
    spec.layers.push_back(LayerSpec::conv(base_filters << std::min(i, std::max(pools - 1, 0)), 3));
    if (i < pools) {
      spec.layers.push_back(LayerSpec::maxpool(2, 2));
    }
  }
  spec.layers.push_back(LayerSpec::conv(spec.head_channels(), 1, Activation::linear));
  spec.layers.push_back(LayerSpec::reshape());
  return spec;
}

std::vector<LayerShape> infer_shapes(const NetworkSpec & spec)
{
  if (spec.input_height <= 0 || spec.input_width <= 0 || spec.input_channels <= 0) {
    throw std::invalid_argument("network input shape must be positive");
  }
  if (spec.layers.empty()) {
    throw std::invalid_argument("network has no layers");
  }
  std::vector<LayerShape> shapes;
  Shape3 current{spec.input_channels, spec.input_height, spec.input_width};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec & layer = spec.layers[i];
    LayerShape ls;
    ls.name = layer_name(layer, i);
    ls.spec = layer;
    ls.input = current;
    switch (layer.kind) {
      case LayerKind::conv2d: {
        if (layer.kernel != 1 && layer.kernel != 3) {
          throw std::invalid_argument(ls.name + ": kernel must be 1x1 or 3x3");
        }
        if (layer.stride != 1 || layer.padding != layer.kernel / 2 || layer.filters <= 0) {
          throw std::invalid_argument(ls.name + ": expected positive filters with stride-1 same padding");
        }
        ls.output = {layer.filters, current.height, current.width};
        ls.parameters = static_cast<std::size_t>(layer.filters) *
                          (static_cast<std::size_t>(current.channels) * layer.kernel * layer.kernel) +
                        static_cast<std::size_t>(layer.filters);
        break;
      }
      case LayerKind::maxpool: {
        if (layer.kernel < 1 || layer.stride < 1 || layer.stride > layer.kernel) {
          throw std::invalid_argument(ls.name + ": invalid pool window");
        }
        ls.output = {
          current.channels, ceil_div(current.height, layer.stride),
          ceil_div(current.width, layer.stride)};
        break;
      }
      case LayerKind::reshape: {
        if (i + 1 != spec.layers.size()) {
          throw std::invalid_argument(ls.name + ": reshape must be the last layer");
        }
        if (current.channels != spec.head_channels()) {
          throw std::invalid_argument(
            ls.name + ": head has " + std::to_string(current.channels) + " channels, expected " +
            std::to_string(spec.head_channels()));
        }
        ls.output = current;
        break;
      }
    }
    current = ls.output;
    shapes.push_back(ls);
  }
  if (spec.layers.back().kind != LayerKind::reshape) {
    throw std::invalid_argument("network must end with a reshape to the head layout");
  }
  return shapes;
}

std::string format_shapes(const NetworkSpec & spec)
{
  const auto shapes = infer_shapes(spec);
  std::ostringstream out;
  auto hwc = [](const Shape3 & s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
  };
  out << "input " << spec.input_height << "x" << spec.input_width << "x" << spec.input_channels
      << '\n';
  std::size_t total = 0;
  for (const LayerShape & ls : shapes) {
    out << ls.name;
    switch (ls.spec.kind) {
      case LayerKind::conv2d:
        out << " filters=" << ls.spec.filters << " size=(" << ls.spec.kernel << "," << ls.spec.kernel
            << ") -> " << hwc(ls.output) << " params=" << ls.parameters;
        break;
      case LayerKind::maxpool:
        out << " size=" << ls.spec.kernel << " stride=" << ls.spec.stride << " -> " << hwc(ls.output);
        break;
      case LayerKind::reshape:
        out << " -> " << ls.output.height << "x" << ls.output.width << "x" << spec.anchors_per_cell
            << "x" << kValuesPerAnchor;
        break;
    }
    out << '\n';
    total += ls.parameters;
  }
  out << "parameters " << total << '\n';
  return out.str();
}

Tensor3 grid_to_tensor(const GridMap & grid)
{
  Tensor3 t(Shape3{2, grid.rows, grid.cols});
  const std::size_t plane = static_cast<std::size_t>(grid.rows) * grid.cols;
  std::transform(grid.height.begin(), grid.height.end(), t.data.begin(),
                 [](float v) { return static_cast<double>(v) / 255.0; });
  std::copy(grid.density.begin(), grid.density.end(), t.data.begin() + static_cast<std::ptrdiff_t>(plane));
  return t;
}

HeadTensor head_from_output(const Tensor3 & output, int anchors_per_cell)
{
  if (output.shape.channels != anchors_per_cell * kValuesPerAnchor ||
      output.shape.height != output.shape.width) {
    throw std::invalid_argument("network output does not have the S x S x B*(8+classes) layout");
  }
  const int side = output.shape.height;
  HeadTensor head(side, anchors_per_cell);
  for (int a = 0; a < anchors_per_cell; ++a) {
    for (int f = 0; f < kValuesPerAnchor; ++f) {
      const int channel = a * kValuesPerAnchor + f;
      for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
          head.at(row, col, a, f) = output.at(channel, row, col);
        }
      }
    }
  }
  return head;
}

Tensor3 output_from_head(const HeadTensor & head)
{
  const int side = head.grid_side();
  const int anchors = head.anchors_per_cell();
  Tensor3 out(Shape3{anchors * kValuesPerAnchor, side, side});
  for (int a = 0; a < anchors; ++a) {
    for (int f = 0; f < kValuesPerAnchor; ++f) {
      const int channel = a * kValuesPerAnchor + f;
      for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
          out.at(channel, row, col) = head.at(row, col, a, f);
        }
      }
    }
  }
  return out;
}

Network::Network(NetworkSpec spec, std::vector<LayerShape> shapes, std::vector<double> parameters)
: spec_(std::move(spec)), shapes_(std::move(shapes)), parameters_(std::move(parameters))
{
  std::size_t offset = 0;
  for (const LayerShape & ls : shapes_) {
    offsets_.push_back(offset);
    offset += ls.parameters;
  }
  if (offset != parameters_.size()) {
    throw std::invalid_argument("parameter count does not match the network spec");
  }
}

Tensor3 Network::forward(const Tensor3 & input) const
{
  Trace trace;
  return forward(input, trace);
}

Tensor3 Network::forward(const Tensor3 & input, Trace & trace) const
{
  const Shape3 expected = shapes_.front().input;
  if (!(input.shape == expected)) {
    throw std::invalid_argument(
      "input shape " + std::to_string(input.shape.height) + "x" + std::to_string(input.shape.width) +
      "x" + std::to_string(input.shape.channels) + " does not match the network");
  }
  trace.inputs.assign(shapes_.size(), Tensor3{});
  trace.pre_activations.assign(shapes_.size(), Tensor3{});
  trace.argmax.assign(shapes_.size(), {});

  Tensor3 current = input;
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    const LayerShape & ls = shapes_[i];
    const LayerSpec & layer = ls.spec;
    switch (layer.kind) {
      case LayerKind::conv2d: {
        const int fan_in = ls.input.channels * layer.kernel * layer.kernel;
        const ConstMatrixMap weights(parameters_.data() + offsets_[i], layer.filters, fan_in);
        const double * bias = parameters_.data() + offsets_[i] + static_cast<std::size_t>(layer.filters) * fan_in;
        Tensor3 pre(ls.output);
        MatrixMap pre_map(pre.data.data(), layer.filters, static_cast<Eigen::Index>(ls.output.height) * ls.output.width);
        if (layer.kernel == 1) {
          const ConstMatrixMap in_map(current.data.data(), ls.input.channels,
                                      static_cast<Eigen::Index>(ls.input.height) * ls.input.width);
          pre_map.noalias() = weights * in_map;
        } else {
          pre_map.noalias() = weights * im2col(current, layer.kernel, layer.padding);
        }
        for (int f = 0; f < layer.filters; ++f) {
          pre_map.row(f).array() += bias[f];
        }
        Tensor3 out = pre;
        if (layer.activation == Activation::leaky_relu) {
          for (double & v : out.data) {
            v = v > 0.0 ? v : kLeakySlope * v;
          }
        }
        trace.inputs[i] = std::move(current);
        trace.pre_activations[i] = std::move(pre);
        current = std::move(out);
        break;
      }
      case LayerKind::maxpool: {
        Tensor3 out(ls.output);
        auto & argmax = trace.argmax[i];
        argmax.assign(out.data.size(), 0);
        const int h = ls.input.height;
        const int w = ls.input.width;
        for (int c = 0; c < ls.output.channels; ++c) {
          for (int oy = 0; oy < ls.output.height; ++oy) {
            for (int ox = 0; ox < ls.output.width; ++ox) {
              // Window cells past the edge replicate the last row/column, so
              // clipping the window gives the same maximum.
              const int y1 = std::min(oy * layer.stride + layer.kernel, h);
              const int x1 = std::min(ox * layer.stride + layer.kernel, w);
              std::size_t best = (static_cast<std::size_t>(c) * h + oy * layer.stride) * w + ox * layer.stride;
              for (int y = oy * layer.stride; y < y1; ++y) {
                for (int x = ox * layer.stride; x < x1; ++x) {
                  const std::size_t idx = (static_cast<std::size_t>(c) * h + y) * w + x;
                  if (current.data[idx] > current.data[best]) {
                    best = idx;
                  }
                }
              }
              const std::size_t o = (static_cast<std::size_t>(c) * ls.output.height + oy) * ls.output.width + ox;
              out.data[o] = current.data[best];
              argmax[o] = static_cast<std::uint32_t>(best);
            }
          }
        }
        current = std::move(out);
        break;
      }
      case LayerKind::reshape:
        break;
    }
  }
  return current;
}

std::vector<double> Network::backward(const Trace & trace, const Tensor3 & output_gradient) const
{
  if (!(output_gradient.shape == output_shape())) {
    throw std::invalid_argument("output gradient shape does not match the network");
  }
  if (trace.inputs.size() != shapes_.size()) {
    throw std::invalid_argument("trace does not belong to this network");
  }
  std::vector<double> grads(parameters_.size(), 0.0);
  Tensor3 grad = output_gradient;
  for (std::size_t li = shapes_.size(); li-- > 0;) {
    const LayerShape & ls = shapes_[li];
    const LayerSpec & layer = ls.spec;
    switch (layer.kind) {
      case LayerKind::reshape:
        break;
      case LayerKind::maxpool: {
        Tensor3 grad_in(ls.input);
        const auto & argmax = trace.argmax[li];
        for (std::size_t o = 0; o < grad.data.size(); ++o) {
          grad_in.data[argmax[o]] += grad.data[o];
        }
        grad = std::move(grad_in);
        break;
      }
      case LayerKind::conv2d: {
        const Tensor3 & pre = trace.pre_activations[li];
        if (layer.activation == Activation::leaky_relu) {
          for (std::size_t k = 0; k < grad.data.size(); ++k) {
            if (!(pre.data[k] > 0.0)) {
              grad.data[k] *= kLeakySlope;
            }
          }
        }
        const int fan_in = ls.input.channels * layer.kernel * layer.kernel;
        const Eigen::Index pixels = static_cast<Eigen::Index>(ls.output.height) * ls.output.width;
        const ConstMatrixMap grad_map(grad.data.data(), layer.filters, pixels);
        MatrixMap grad_w(grads.data() + offsets_[li], layer.filters, fan_in);
        double * grad_b = grads.data() + offsets_[li] + static_cast<std::size_t>(layer.filters) * fan_in;
        const Tensor3 & input = trace.inputs[li];
        const ConstMatrixMap weights(parameters_.data() + offsets_[li], layer.filters, fan_in);

        if (layer.kernel == 1) {
          const ConstMatrixMap in_map(input.data.data(), ls.input.channels, pixels);
          grad_w.noalias() = grad_map * in_map.transpose();
        } else {
          grad_w.noalias() = grad_map * im2col(input, layer.kernel, layer.padding).transpose();
        }
        for (int f = 0; f < layer.filters; ++f) {
          grad_b[f] = grad_map.row(f).sum();
        }
        if (li == 0) {
          break;
        }
        Tensor3 grad_in(ls.input);
        if (layer.kernel == 1) {
          MatrixMap in_grad(grad_in.data.data(), ls.input.channels, pixels);
          in_grad.noalias() = weights.transpose() * grad_map;
        } else {
          const RowMatrix cols = weights.transpose() * grad_map;
          col2im(cols, layer.kernel, layer.padding, grad_in);
        }
        grad = std::move(grad_in);
        break;
      }
    }
  }
  return grads;
}

Network build_network(const NetworkSpec & spec, std::uint64_t seed)
{
  auto shapes = infer_shapes(spec);
  std::size_t total = 0;
  for (const LayerShape & ls : shapes) {
    total += ls.parameters;
  }
  std::vector<double> params(total, 0.0);
  Rng rng = make_stream(seed, "init");
  std::size_t offset = 0;
  for (const LayerShape & ls : shapes) {
    if (ls.spec.kind == LayerKind::conv2d) {
      const int fan_in = ls.input.channels * ls.spec.kernel * ls.spec.kernel;
      const double gain = ls.spec.activation == Activation::leaky_relu ? 6.0 : 3.0;
      const double bound = std::sqrt(gain / fan_in);
      const std::size_t weight_count = static_cast<std::size_t>(ls.spec.filters) * fan_in;
      for (std::size_t k = 0; k < weight_count; ++k) {
        params[offset + k] = uniform(rng, -bound, bound);
      }
    }
    offset += ls.parameters;
  }
  return Network(spec, std::move(shapes), std::move(params));
}

void set_confidence_prior(Network & net, double prior)
{
  if (!(prior > 0.0 && prior < 1.0)) {
    throw std::invalid_argument("confidence prior must lie in (0, 1)");
  }
  const std::size_t head = net.shapes().size() - 2;
  const LayerShape & ls = net.shapes()[head];
  if (ls.spec.kind != LayerKind::conv2d || ls.output.channels != net.spec().head_channels()) {
    throw std::invalid_argument("network has no convolutional head before the reshape");
  }
  const std::size_t bias = net.parameter_offset(head) +
                           static_cast<std::size_t>(ls.spec.filters) * ls.input.channels *
                             ls.spec.kernel * ls.spec.kernel;
  for (int a = 0; a < net.spec().anchors_per_cell; ++a) {
    net.parameters()[bias + static_cast<std::size_t>(a) * kValuesPerAnchor + kTconf] = logit(prior);
  }
}

void save_weights(const std::filesystem::path & path, const Network & net)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  const NetworkSpec & spec = net.spec();
  out.write(kWeightsMagic.data(), kWeightsMagic.size());
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(spec.layers.size()));
  put_i32(out, spec.input_height);
  put_i32(out, spec.input_width);
  put_i32(out, spec.input_channels);
  put_i32(out, spec.anchors_per_cell);
  const auto params = net.parameters();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec & l = spec.layers[i];
    put_u32(out, static_cast<std::uint32_t>(l.kind));
    put_i32(out, l.filters);
    put_i32(out, l.kernel);
    put_i32(out, l.stride);
    put_i32(out, l.padding);
    put_u32(out, static_cast<std::uint32_t>(l.activation));
    const std::size_t count = net.shapes()[i].parameters;
    put_u32(out, static_cast<std::uint32_t>(count));
    for (std::size_t k = 0; k < count; ++k) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(params[net.parameter_offset(i) + k])));
    }
  }
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

Network load_weights(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kWeightsMagic) {
    throw FormatError("not a yolo3d weights file");
  }
  if (get_u32(in) != kWeightsVersion) {
    throw FormatError("unsupported weights file version");
  }
  const std::uint32_t layer_count = get_u32(in);
  NetworkSpec spec;
  spec.input_height = get_i32(in);
  spec.input_width = get_i32(in);
  spec.input_channels = get_i32(in);
  spec.anchors_per_cell = get_i32(in);
  std::vector<std::vector<double>> layer_params;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(get_u32(in));
    l.filters = get_i32(in);
    l.kernel = get_i32(in);
    l.stride = get_i32(in);
    l.padding = get_i32(in);
    l.activation = static_cast<Activation>(get_u32(in));
    const std::uint32_t count = get_u32(in);
    std::vector<double> values(count);
    for (double & v : values) {
      v = std::bit_cast<float>(get_u32(in));
    }
    spec.layers.push_back(l);
    layer_params.push_back(std::move(values));
  }
  auto shapes = infer_shapes(spec);
  std::vector<double> params;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (layer_params[i].size() != shapes[i].parameters) {
      throw FormatError(shapes[i].name + ": parameter count mismatch");
    }
    params.insert(params.end(), layer_params[i].begin(), layer_params[i].end());
  }
  return Network(spec, std::move(shapes), std::move(params));
}

}  // namespace yolo3d
