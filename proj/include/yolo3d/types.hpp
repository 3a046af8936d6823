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

#ifndef YOLO3D__TYPES_HPP_
#define YOLO3D__TYPES_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace yolo3d
{

inline constexpr double kPi = 3.14159265358979323846;

/// Raised when an input file does not follow its expected layout.
class FormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

enum class ClassId : int { car = 0, pedestrian = 1, cyclist = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassId, kNumClasses> kAllClasses{
  ClassId::car, ClassId::pedestrian, ClassId::cyclist};

/// Lower-case name used in text exports ("car", "pedestrian", "cyclist").
std::string_view class_name(ClassId id);

/// Accepts both the export names and KITTI spellings ("Car", "Pedestrian", "Cyclist").
std::optional<ClassId> parse_class_name(std::string_view name);

inline int class_index(ClassId id) { return static_cast<int>(id); }

/// One LiDAR return. x forward, y left, z up (meters); r reflectance in [0, 1].
struct Point
{
  float x;
  float y;
  float z;
  float r;
};

struct PointCloud
{
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Oriented 3D box in the LiDAR frame. (cx, cy, cz) is the geometric center,
/// l runs along the heading direction and w across it; yaw is the heading
/// measured from +x towards +y.
struct Obb3D
{
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double w = 1.0;
  double l = 1.0;
  double h = 1.0;
  double yaw = 0.0;
  ClassId class_id = ClassId::car;
  double confidence = 1.0;
};

/// Wraps an angle into [-pi, pi].
double wrap_angle(double radians);

}  // namespace yolo3d

#endif  // YOLO3D__TYPES_HPP_
