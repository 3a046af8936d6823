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

#ifndef YOLO3D__POINTCLOUD_IO_HPP_
#define YOLO3D__POINTCLOUD_IO_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "yolo3d/types.hpp"

namespace yolo3d
{

struct ScanReadResult
{
  PointCloud cloud;
  /// Records dropped because one of their four floats was NaN or Inf.
  std::size_t skipped_records = 0;
};

/// Decodes N x 4 little-endian float32 records (x, y, z, r). Throws FormatError
/// when the byte count is not a multiple of 16.
ScanReadResult decode_velodyne_scan(std::span<const std::byte> bytes);
ScanReadResult read_velodyne_scan(const std::filesystem::path & path);

std::vector<std::byte> encode_velodyne_scan(const PointCloud & cloud);
void write_velodyne_scan(const std::filesystem::path & path, const PointCloud & cloud);

/// KITTI object calibration. All matrices are row-major.
struct Calibration
{
  std::array<double, 12> p2{};              // 3x4
  std::array<double, 9> r0_rect{};          // 3x3
  std::array<double, 12> tr_velo_to_cam{};  // 3x4
  int image_width = 1242;
  int image_height = 375;
};

/// Parses "P2:", "R0_rect:" and "Tr_velo_to_cam:" lines. A missing key or a
/// non-orthonormal R0_rect raises FormatError naming the offending key.
/// KITTI calib files carry no image size, so it is passed in.
Calibration parse_calibration_text(std::string_view text, int image_width = 1242,
                                   int image_height = 375);
Calibration parse_calibration(const std::filesystem::path & path, int image_width = 1242,
                              int image_height = 375);

/// Serializes the three keys parse_calibration reads.
std::string format_calibration(const Calibration & calib);

/// Identity rectification, the pure velodyne-to-camera axis permutation and a
/// KITTI-like pinhole P2 (f = 721.5377, principal point (609.5593, 172.854)).
Calibration axis_remap_calibration();

/// Rectified camera coordinates of a LiDAR point: R0_rect * Tr_velo_to_cam * p.
std::array<double, 3> velo_to_rect(const Calibration & calib, const std::array<double, 3> & p);
std::array<double, 3> rect_to_velo(const Calibration & calib, const std::array<double, 3> & p);

struct LabelMetadata
{
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
};

struct LabelParseResult
{
  std::vector<Obb3D> boxes;
  /// Parallel to boxes.
  std::vector<LabelMetadata> metadata;
  /// Lines with too few or non-numeric fields.
  std::size_t malformed_lines = 0;
  /// Well-formed lines whose class is not car, pedestrian or cyclist.
  std::size_t ignored_lines = 0;
};

/// Converts KITTI camera-frame labels to LiDAR-frame boxes. The label location
/// is the bottom-face center in rectified camera coordinates; the box center is
/// lifted by h/2 before transforming. Yaw is -rotation_y - pi/2, wrapped.
LabelParseResult parse_kitti_labels_text(std::string_view text, const Calibration & calib);
LabelParseResult parse_kitti_labels(const std::filesystem::path & path, const Calibration & calib);

/// Inverse of the label transform: the KITTI camera location (bottom center)
/// and rotation_y of a LiDAR-frame box.
std::array<double, 3> kitti_camera_location(const Obb3D & box, const Calibration & calib);
double kitti_rotation_y(const Obb3D & box);

/// Keeps points with positive camera depth whose projection through P2 lands in
/// [0, width) x [0, height).
PointCloud filter_to_image_fov(const PointCloud & cloud, const Calibration & calib);

}  // namespace yolo3d

#endif  // YOLO3D__POINTCLOUD_IO_HPP_
