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

#include "yolo3d/types.hpp"

#include <cmath>

namespace yolo3d
{

std::string_view class_name(ClassId id)
{
  switch (id) {
    case ClassId::car:
      return "car";
    case ClassId::pedestrian:
      return "pedestrian";
    case ClassId::cyclist:
      return "cyclist";
  }
  return "unknown";
}

std::optional<ClassId> parse_class_name(std::string_view name)
{
  if (name == "car" || name == "Car") {
    return ClassId::car;
  }
  if (name == "pedestrian" || name == "Pedestrian") {
    return ClassId::pedestrian;
  }
  if (name == "cyclist" || name == "Cyclist") {
    return ClassId::cyclist;
  }
  return std::nullopt;
}

double wrap_angle(double radians)
{
  if (radians >= -kPi && radians <= kPi) {
    return radians;
  }
  return std::remainder(radians, 2.0 * kPi);
}

}  // namespace yolo3d
