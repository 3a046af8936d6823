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

#include "yolo3d/pointcloud_io.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>

namespace yolo3d
{
namespace
{

constexpr std::size_t kRecordBytes = 16;

float load_le_float(const std::byte * src)
{
  std::uint32_t bits = 0;
  std::memcpy(&bits, src, sizeof(bits));
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  return std::bit_cast<float>(bits);
}

void store_le_float(float value, std::byte * dst)
{
  auto bits = std::bit_cast<std::uint32_t>(value);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  std::memcpy(dst, &bits, sizeof(bits));
}

std::string read_text_file(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string_view> split_whitespace(std::string_view line)
{
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) {
      ++pos;
    }
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) {
      ++end;
    }
    if (end > pos) {
      tokens.push_back(line.substr(pos, end - pos));
    }
    pos = end;
  }
  return tokens;
}

bool parse_double(std::string_view token, double & out)
{
  std::string owned(token);
  char * end = nullptr;
  out = std::strtod(owned.c_str(), &end);
  return end == owned.c_str() + owned.size() && std::isfinite(out);
}

template <std::size_t N>
std::array<double, N> find_matrix(std::string_view text, std::string_view key)
{
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) {
      line_end = text.size();
    }
    const auto tokens = split_whitespace(text.substr(line_start, line_end - line_start));
    if (!tokens.empty() && tokens.front().size() == key.size() + 1 &&
        tokens.front().starts_with(key) && tokens.front().back() == ':') {
      if (tokens.size() != N + 1) {
        throw FormatError(std::string(key) + ": expected " + std::to_string(N) + " values");
      }
      std::array<double, N> values{};
      for (std::size_t i = 0; i < N; ++i) {
        if (!parse_double(tokens[i + 1], values[i])) {
          throw FormatError(std::string(key) + ": non-numeric value");
        }
      }
      return values;
    }
    line_start = line_end + 1;
  }
  throw FormatError("calibration is missing key " + std::string(key));
}

std::optional<ClassId> kitti_class(std::string_view type)
{
  if (type == "Car") {
    return ClassId::car;
  }
  if (type == "Pedestrian") {
    return ClassId::pedestrian;
  }
  if (type == "Cyclist") {
    return ClassId::cyclist;
  }
  return std::nullopt;
}

Eigen::Matrix3d rect_rotation(const Calibration & calib)
{
  return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(calib.r0_rect.data());
}

Eigen::Matrix<double, 3, 4> velo_to_cam(const Calibration & calib)
{
  return Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>>(
    calib.tr_velo_to_cam.data());
}

}  // namespace

ScanReadResult decode_velodyne_scan(std::span<const std::byte> bytes)
{
  if (bytes.size() % kRecordBytes != 0) {
    throw FormatError(
      "velodyne scan size " + std::to_string(bytes.size()) + " is not a multiple of 16 bytes");
  }
  ScanReadResult result;
  const std::size_t records = bytes.size() / kRecordBytes;
  result.cloud.points.reserve(records);
  for (std::size_t i = 0; i < records; ++i) {
    const std::byte * rec = bytes.data() + i * kRecordBytes;
    const Point p{
      load_le_float(rec), load_le_float(rec + 4), load_le_float(rec + 8),
      load_le_float(rec + 12)};
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.r)) {
      ++result.skipped_records;
      continue;
    }
    result.cloud.points.push_back(p);
  }
  return result;
}

ScanReadResult read_velodyne_scan(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_velodyne_scan(std::as_bytes(std::span<const char>(raw)));
}

std::vector<std::byte> encode_velodyne_scan(const PointCloud & cloud)
{
  std::vector<std::byte> bytes(cloud.size() * kRecordBytes);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::byte * rec = bytes.data() + i * kRecordBytes;
    const Point & p = cloud.points[i];
    store_le_float(p.x, rec);
    store_le_float(p.y, rec + 4);
    store_le_float(p.z, rec + 8);
    store_le_float(p.r, rec + 12);
  }
  return bytes;
}

void write_velodyne_scan(const std::filesystem::path & path, const PointCloud & cloud)
{
  const auto bytes = encode_velodyne_scan(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Calibration parse_calibration_text(std::string_view text, int image_width, int image_height)
{
  Calibration calib;
  calib.p2 = find_matrix<12>(text, "P2");
  calib.r0_rect = find_matrix<9>(text, "R0_rect");
  calib.tr_velo_to_cam = find_matrix<12>(text, "Tr_velo_to_cam");
  calib.image_width = image_width;
  calib.image_height = image_height;

  const Eigen::Matrix3d r0 = rect_rotation(calib);
  if (((r0 * r0.transpose()) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-3) {
    throw FormatError("R0_rect is not orthonormal");
  }
  return calib;
}

Calibration parse_calibration(const std::filesystem::path & path, int image_width, int image_height)
{
  return parse_calibration_text(read_text_file(path), image_width, image_height);
}

std::string format_calibration(const Calibration & calib)
{
  std::ostringstream out;
  out << std::setprecision(17);
  auto emit = [&out](std::string_view key, std::span<const double> values) {
    out << key << ':';
    for (double v : values) {
      out << ' ' << v;
    }
    out << '\n';
  };
  emit("P2", calib.p2);
  emit("R0_rect", calib.r0_rect);
  emit("Tr_velo_to_cam", calib.tr_velo_to_cam);
  return out.str();
}

Calibration axis_remap_calibration()
{
  Calibration calib;
  calib.p2 = {721.5377, 0.0, 609.5593, 0.0, 0.0, 721.5377, 172.854, 0.0, 0.0, 0.0, 1.0, 0.0};
  calib.r0_rect = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
  // camera x = -lidar y, camera y = -lidar z, camera z = lidar x
  calib.tr_velo_to_cam = {0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0};
  return calib;
}

std::array<double, 3> velo_to_rect(const Calibration & calib, const std::array<double, 3> & p)
{
  const Eigen::Vector3d cam = velo_to_cam(calib) * Eigen::Vector4d(p[0], p[1], p[2], 1.0);
  const Eigen::Vector3d rect = rect_rotation(calib) * cam;
  return {rect.x(), rect.y(), rect.z()};
}

std::array<double, 3> rect_to_velo(const Calibration & calib, const std::array<double, 3> & p)
{
  const Eigen::Matrix<double, 3, 4> tr = velo_to_cam(calib);
  const Eigen::Vector3d cam = rect_rotation(calib).partialPivLu().solve(Eigen::Vector3d(p[0], p[1], p[2]));
  const Eigen::Vector3d velo = tr.leftCols<3>().partialPivLu().solve(cam - tr.col(3));
  return {velo.x(), velo.y(), velo.z()};
}

LabelParseResult parse_kitti_labels_text(std::string_view text, const Calibration & calib)
{
  LabelParseResult result;
  std::size_t line_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) {
      line_end = text.size();
    }
    const auto tokens = split_whitespace(text.substr(line_start, line_end - line_start));
    line_start = line_end + 1;
    if (tokens.empty()) {
      continue;
    }
    if (tokens.size() < 15) {
      ++result.malformed_lines;
      continue;
    }
    std::array<double, 14> v{};
    bool ok = true;
    for (std::size_t i = 0; i < v.size() && ok; ++i) {
      ok = parse_double(tokens[i + 1], v[i]);
    }
    if (!ok) {
      ++result.malformed_lines;
      continue;
    }
    const auto cls = kitti_class(tokens[0]);
    if (!cls) {
      ++result.ignored_lines;
      continue;
    }
    // v: truncation occlusion alpha x1 y1 x2 y2 h w l x y z rotation_y
    const double h = v[7];
    const double w = v[8];
    const double l = v[9];
    if (!(h > 0.0 && w > 0.0 && l > 0.0)) {
      ++result.malformed_lines;
      continue;
    }
    // Camera y points down, so the center sits h/2 above the bottom face.
    const auto center = rect_to_velo(calib, {v[10], v[11] - 0.5 * h, v[12]});
    Obb3D box;
    box.cx = center[0];
    box.cy = center[1];
    box.cz = center[2];
    box.w = w;
    box.l = l;
    box.h = h;
    box.yaw = wrap_angle(-v[13] - 0.5 * kPi);
    box.class_id = *cls;
    box.confidence = 1.0;
    result.boxes.push_back(box);
    result.metadata.push_back({v[0], static_cast<int>(v[1]), v[2]});
  }
  return result;
}

LabelParseResult parse_kitti_labels(const std::filesystem::path & path, const Calibration & calib)
{
  return parse_kitti_labels_text(read_text_file(path), calib);
}

std::array<double, 3> kitti_camera_location(const Obb3D & box, const Calibration & calib)
{
  auto rect = velo_to_rect(calib, {box.cx, box.cy, box.cz});
  rect[1] += 0.5 * box.h;
  return rect;
}

double kitti_rotation_y(const Obb3D & box) { return wrap_angle(-box.yaw - 0.5 * kPi); }

PointCloud filter_to_image_fov(const PointCloud & cloud, const Calibration & calib)
{
  const Eigen::Matrix<double, 3, 4> p2 =
    Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>>(calib.p2.data());
  const Eigen::Matrix3d r0 = rect_rotation(calib);
  const Eigen::Matrix<double, 3, 4> tr = velo_to_cam(calib);
  const double width = calib.image_width;
  const double height = calib.image_height;

  PointCloud kept;
  for (const Point & p : cloud.points) {
    const Eigen::Vector3d rect = r0 * (tr * Eigen::Vector4d(p.x, p.y, p.z, 1.0));
    if (!(rect.z() > 0.0)) {
      continue;
    }
    const Eigen::Vector3d uvw = p2 * rect.homogeneous();
    if (!(uvw.z() > 0.0)) {
      continue;
    }
    const double u = uvw.x() / uvw.z();
    const double v = uvw.y() / uvw.z();
    if (u >= 0.0 && u < width && v >= 0.0 && v < height) {
      kept.points.push_back(p);
    }
  }
  return kept;
}

}  // namespace yolo3d
