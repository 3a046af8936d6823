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

#include "yolo3d/box_geom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace yolo3d
{
namespace
{

constexpr double kAreaEpsilon = 1e-12;
constexpr double kOffsetClamp = 1e-6;

double cross(const Vec2 & o, const Vec2 & a, const Vec2 & b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double polygon_area(const std::vector<Vec2> & poly)
{
  if (poly.size() < 3) {
    return 0.0;
  }
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 & p = poly[i];
    const Vec2 & q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman against a convex, counter-clockwise clip polygon.
std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::array<Vec2, 4> & clip)
{
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2 & a = clip[e];
    const Vec2 & b = clip[(e + 1) % clip.size()];
    const double scale = std::max(1.0, std::hypot(b.x - a.x, b.y - a.y));
    const double tol = 1e-12 * scale * scale;

    std::vector<Vec2> output;
    output.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2 & cur = subject[i];
      const Vec2 & prev = subject[(i + subject.size() - 1) % subject.size()];
      const double d_cur = cross(a, b, cur);
      const double d_prev = cross(a, b, prev);
      const bool cur_in = d_cur >= -tol;
      const bool prev_in = d_prev >= -tol;
      if (cur_in != prev_in) {
        const double denom = d_prev - d_cur;
        if (std::abs(denom) > 0.0) {
          const double t = d_prev / denom;
          output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
      }
      if (cur_in) {
        output.push_back(cur);
      }
    }
    subject = std::move(output);
  }
  return subject;
}

bool same_footprint(const Obb3D & a, const Obb3D & b)
{
  return a.cx == b.cx && a.cy == b.cy && a.w == b.w && a.l == b.l && a.yaw == b.yaw;
}

}  // namespace

std::array<double, kValuesPerAnchor> RawPrediction::to_array() const
{
  std::array<double, kValuesPerAnchor> v{};
  v[kTx] = t_x;
  v[kTy] = t_y;
  v[kTz] = t_z;
  v[kTw] = t_w;
  v[kTl] = t_l;
  v[kTh] = t_h;
  v[kTphi] = t_phi;
  v[kTconf] = t_conf;
  std::copy(class_logits.begin(), class_logits.end(), v.begin() + kClassLogits);
  return v;
}

RawPrediction RawPrediction::from_array(std::span<const double, kValuesPerAnchor> v)
{
  RawPrediction raw;
  raw.t_x = v[kTx];
  raw.t_y = v[kTy];
  raw.t_z = v[kTz];
  raw.t_w = v[kTw];
  raw.t_l = v[kTl];
  raw.t_h = v[kTh];
  raw.t_phi = v[kTphi];
  raw.t_conf = v[kTconf];
  std::copy(v.begin() + kClassLogits, v.end(), raw.class_logits.begin());
  return raw;
}

void HeadConfig::validate(const GridConfig & grid) const
{
  if (grid_side <= 0 || anchors_per_cell <= 0 || downsample <= 0) {
    throw std::invalid_argument("head dimensions must be positive");
  }
  if (grid_side * downsample != grid.rows() || grid_side * downsample != grid.cols()) {
    throw std::invalid_argument(
      "head grid " + std::to_string(grid_side) + " x downsample " + std::to_string(downsample) +
      " does not match input grid " + std::to_string(grid.rows()) + "x" +
      std::to_string(grid.cols()));
  }
}

double sigmoid(double t)
{
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses> & logits)
{
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumClasses> out{};
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    out[c] = std::exp(logits[c] - peak);
    sum += out[c];
  }
  for (double & v : out) {
    v /= sum;
  }
  return out;
}

std::vector<Anchor> compute_anchors(std::span<const Obb3D> labels, std::span<const ClassId> classes)
{
  std::vector<Anchor> anchors;
  anchors.reserve(classes.size());
  for (ClassId cls : classes) {
    double sw = 0.0;
    double sl = 0.0;
    double sh = 0.0;
    std::size_t n = 0;
    for (const Obb3D & box : labels) {
      if (box.class_id == cls) {
        sw += box.w;
        sl += box.l;
        sh += box.h;
        ++n;
      }
    }
    if (n == 0) {
      throw std::invalid_argument("no labels for class " + std::string(class_name(cls)));
    }
    const auto count = static_cast<double>(n);
    anchors.push_back({sw / count, sl / count, sh / count, cls});
  }
  return anchors;
}

std::string format_anchors(std::span<const Anchor> anchors)
{
  std::ostringstream out;
  out << std::setprecision(17);
  for (const Anchor & a : anchors) {
    out << class_name(a.class_id) << ' ' << a.w << ' ' << a.l << ' ' << a.h << '\n';
  }
  return out.str();
}

std::vector<Anchor> parse_anchors_text(std::string_view text)
{
  std::vector<Anchor> anchors;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) {
      continue;
    }
    Anchor a;
    const auto cls = parse_class_name(name);
    if (!cls || !(fields >> a.w >> a.l >> a.h) || !(a.w > 0.0 && a.l > 0.0 && a.h > 0.0)) {
      throw FormatError("anchor file line " + std::to_string(line_no) + " is malformed");
    }
    a.class_id = *cls;
    anchors.push_back(a);
  }
  return anchors;
}

void write_anchor_file(const std::filesystem::path & path, std::span<const Anchor> anchors)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << format_anchors(anchors);
}

std::vector<Anchor> read_anchor_file(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_anchors_text(buffer.str());
}

double normalize_yaw(double phi) { return phi / kPi; }

double denormalize_yaw(double value) { return value * kPi; }

Obb3D decode(const RawPrediction & raw, const CellIndex & cell, const Anchor & anchor,
             const HeadConfig & head, const GridConfig & grid)
{
  const double cell_size = head.cell_size(grid);
  const double b_x = sigmoid(raw.t_x) + cell.c_x;
  const double b_y = sigmoid(raw.t_y) + cell.c_y;
  const double b_z = sigmoid(raw.t_z) + cell.c_z;

  Obb3D box;
  box.cx = grid.x_range - b_y * cell_size;
  box.cy = b_x * cell_size - grid.y_half_range;
  box.cz = grid.z_min + b_z * (grid.z_max - grid.z_min);
  box.w = anchor.w * std::exp(raw.t_w);
  box.l = anchor.l * std::exp(raw.t_l);
  box.h = anchor.h * std::exp(raw.t_h);
  box.yaw = denormalize_yaw(std::clamp(raw.t_phi, -1.0, 1.0));
  box.confidence = sigmoid(raw.t_conf);
  const auto probs = softmax(raw.class_logits);
  box.class_id = static_cast<ClassId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  return box;
}

EncodedBox encode(const Obb3D & box, const Anchor & anchor, const HeadConfig & head,
                  const GridConfig & grid)
{
  if (!(box.w > 0.0 && box.l > 0.0 && box.h > 0.0)) {
    throw std::invalid_argument("box dimensions must be positive");
  }
  if (!(box.cx >= 0.0 && box.cx < grid.x_range && box.cy >= -grid.y_half_range &&
        box.cy < grid.y_half_range)) {
    throw std::out_of_range("box center lies outside the grid");
  }
  const double cell_size = head.cell_size(grid);
  const double col_f = (box.cy + grid.y_half_range) / cell_size;
  const double row_f = (grid.x_range - box.cx) / cell_size;
  EncodedBox out;
  out.cell.c_x = static_cast<int>(std::floor(col_f));
  out.cell.c_y = static_cast<int>(std::floor(row_f));
  out.cell.c_z = 0;
  if (out.cell.c_x < 0 || out.cell.c_x >= head.grid_side || out.cell.c_y < 0 ||
      out.cell.c_y >= head.grid_side) {
    throw std::out_of_range("box center lies outside the head grid");
  }
  out.frac_x = std::clamp(col_f - out.cell.c_x, kOffsetClamp, 1.0 - kOffsetClamp);
  out.frac_y = std::clamp(row_f - out.cell.c_y, kOffsetClamp, 1.0 - kOffsetClamp);
  out.frac_z =
    std::clamp((box.cz - grid.z_min) / (grid.z_max - grid.z_min), kOffsetClamp, 1.0 - kOffsetClamp);

  out.raw.t_x = logit(out.frac_x);
  out.raw.t_y = logit(out.frac_y);
  out.raw.t_z = logit(out.frac_z);
  out.raw.t_w = std::log(box.w / anchor.w);
  out.raw.t_l = std::log(box.l / anchor.l);
  out.raw.t_h = std::log(box.h / anchor.h);
  out.raw.t_phi = normalize_yaw(wrap_angle(box.yaw));
  return out;
}

std::array<Vec2, 4> bev_corners(const Obb3D & box)
{
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.l;
  const double hw = 0.5 * box.w;
  auto corner = [&](double along, double across) {
    return Vec2{box.cx + along * c - across * s, box.cy + along * s + across * c};
  };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

double bev_intersection_area(const Obb3D & a, const Obb3D & b)
{
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double area = polygon_area(clip_convex({ca.begin(), ca.end()}, cb));
  return area < kAreaEpsilon ? 0.0 : area;
}

double bev_iou(const Obb3D & a, const Obb3D & b)
{
  const double area_a = a.w * a.l;
  const double area_b = b.w * b.l;
  if (!(area_a > kAreaEpsilon) || !(area_b > kAreaEpsilon)) {
    return 0.0;
  }
  if (same_footprint(a, b)) {
    return 1.0;
  }
  const double inter = std::min(bev_intersection_area(a, b), std::min(area_a, area_b));
  const double uni = area_a + area_b - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Obb3D & a, const Obb3D & b)
{
  const double vol_a = a.w * a.l * a.h;
  const double vol_b = b.w * b.l * b.h;
  if (!(vol_a > 0.0) || !(vol_b > 0.0)) {
    return 0.0;
  }
  const double bottom = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double top = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double overlap_h = std::max(0.0, top - bottom);
  if (overlap_h == 0.0) {
    return 0.0;
  }
  if (same_footprint(a, b) && a.cz == b.cz && a.h == b.h) {
    return 1.0;
  }
  const double footprint =
    same_footprint(a, b) ? a.w * a.l
                         : std::min(bev_intersection_area(a, b), std::min(a.w * a.l, b.w * b.l));
  const double inter = footprint * overlap_h;
  return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

std::vector<Obb3D> nms(std::span<const Obb3D> detections, double iou_threshold, bool per_class)
{
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return detections[i].confidence > detections[j].confidence;
  });

  std::vector<bool> suppressed(detections.size(), false);
  std::vector<Obb3D> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) {
      continue;
    }
    kept.push_back(detections[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j]) {
        continue;
      }
      if (per_class && detections[j].class_id != detections[i].class_id) {
        continue;
      }
      if (bev_iou(detections[i], detections[j]) > iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

}  // namespace yolo3d
