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

#ifndef YOLO3D__BEV_RASTERIZER_HPP_
#define YOLO3D__BEV_RASTERIZER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "yolo3d/types.hpp"

namespace yolo3d
{

/// Bird's-eye-view extent. The grid covers x in [0, x_range) forward and
/// y in [-y_half_range, y_half_range) sideways. Row 0 is the farthest-forward
/// band and column 0 the rightmost (most negative y) band.
struct GridConfig
{
  double x_range = 60.8;
  double y_half_range = 30.4;
  double resolution = 0.1;
  double z_min = -2.0;
  double z_max = 2.0;

  /// round-half-up(x_range / resolution)
  int rows() const;
  /// round-half-up(2 * y_half_range / resolution)
  int cols() const;
  /// Throws std::invalid_argument on non-positive resolution, extent or z band.
  void validate() const;
};

/// Round-half-up of extent / resolution, the grid-side rule used everywhere.
int grid_side(double extent, double resolution);

struct CellCoord
{
  int row;
  int col;

  bool operator==(const CellCoord &) const = default;
};

/// Two-channel BEV tensor, row-major, channel planes stored separately.
struct GridMap
{
  GridConfig config;
  int rows = 0;
  int cols = 0;
  /// Clamped max-z scaled to [0, 255]; 0 for empty cells.
  std::vector<float> height;
  /// min(1, log(N+1)/log(64)).
  std::vector<float> density;
  /// N, the number of points that fell into each cell.
  std::vector<std::uint32_t> counts;

  std::size_t index(int row, int col) const
  {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) +
           static_cast<std::size_t>(col);
  }
};

double density_value(std::uint64_t n);
double height_to_pixel(double z, const GridConfig & config);

/// std::nullopt when (x, y) falls outside the grid.
std::optional<CellCoord> world_to_cell(double x, double y, const GridConfig & config);

GridMap rasterize(const PointCloud & cloud, const GridConfig & config);

/// rows x cols x 2 little-endian float32, row-major, channel-last (height, density).
std::vector<std::byte> encode_grid_raw(const GridMap & grid);
void write_grid_raw(const std::filesystem::path & path, const GridMap & grid);

/// 8-bit RGB PNG: red = height, green = density * 255, blue = 0.
void write_grid_png(const std::filesystem::path & path, const GridMap & grid);

}  // namespace yolo3d

#endif  // YOLO3D__BEV_RASTERIZER_HPP_
