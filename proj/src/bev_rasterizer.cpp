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

#include "yolo3d/bev_rasterizer.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

namespace yolo3d
{

int grid_side(double extent, double resolution)
{
  // The small slack absorbs representation error such as 60.8 / 0.1 = 607.999...
  return static_cast<int>(std::floor(extent / resolution + 0.5 + 1e-9));
}

int GridConfig::rows() const { return grid_side(x_range, resolution); }

int GridConfig::cols() const { return grid_side(2.0 * y_half_range, resolution); }

void GridConfig::validate() const
{
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("grid resolution must be positive");
  }
  if (!(x_range > 0.0) || !(y_half_range > 0.0)) {
    throw std::invalid_argument("grid extent must be positive");
  }
  if (!(z_max > z_min)) {
    throw std::invalid_argument("z_max must exceed z_min");
  }
  if (rows() <= 0 || cols() <= 0) {
    throw std::invalid_argument("grid has no cells");
  }
}

double density_value(std::uint64_t n)
{
  // log2 keeps the common cases exact: log2(8) / log2(64) = 3 / 6.
  return std::min(1.0, std::log2(static_cast<double>(n) + 1.0) / 6.0);
}

double height_to_pixel(double z, const GridConfig & config)
{
  const double clamped = std::clamp(z, config.z_min, config.z_max);
  return 255.0 * (clamped - config.z_min) / (config.z_max - config.z_min);
}

std::optional<CellCoord> world_to_cell(double x, double y, const GridConfig & config)
{
  if (!(x >= 0.0 && x < config.x_range && y >= -config.y_half_range && y < config.y_half_range)) {
    return std::nullopt;
  }
  const auto row = static_cast<int>(std::floor((config.x_range - x) / config.resolution));
  const auto col = static_cast<int>(std::floor((y + config.y_half_range) / config.resolution));
  if (row < 0 || row >= config.rows() || col < 0 || col >= config.cols()) {
    return std::nullopt;
  }
  return CellCoord{row, col};
}

GridMap rasterize(const PointCloud & cloud, const GridConfig & config)
{
  config.validate();
  GridMap grid;
  grid.config = config;
  grid.rows = config.rows();
  grid.cols = config.cols();
  const std::size_t cells = static_cast<std::size_t>(grid.rows) * grid.cols;
  grid.height.assign(cells, 0.0F);
  grid.density.assign(cells, 0.0F);
  grid.counts.assign(cells, 0U);

  std::vector<float> max_z(cells, -std::numeric_limits<float>::infinity());
  for (const Point & p : cloud.points) {
    const auto cell = world_to_cell(p.x, p.y, config);
    if (!cell) {
      continue;
    }
    const std::size_t idx = grid.index(cell->row, cell->col);
    ++grid.counts[idx];
    max_z[idx] = std::max(max_z[idx], p.z);
  }
  for (std::size_t i = 0; i < cells; ++i) {
    if (grid.counts[i] == 0) {
      continue;
    }
    grid.height[i] = static_cast<float>(height_to_pixel(max_z[i], config));
    grid.density[i] = static_cast<float>(density_value(grid.counts[i]));
  }
  return grid;
}

std::vector<std::byte> encode_grid_raw(const GridMap & grid)
{
  const std::size_t cells = static_cast<std::size_t>(grid.rows) * grid.cols;
  std::vector<std::byte> bytes(cells * 2 * sizeof(float));
  auto put = [&bytes](std::size_t offset, float value) {
    auto bits = std::bit_cast<std::uint32_t>(value);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap32(bits);
    }
    std::memcpy(bytes.data() + offset, &bits, sizeof(bits));
  };
  for (std::size_t i = 0; i < cells; ++i) {
    put(i * 8, grid.height[i]);
    put(i * 8 + 4, grid.density[i]);
  }
  return bytes;
}

void write_grid_raw(const std::filesystem::path & path, const GridMap & grid)
{
  const auto bytes = encode_grid_raw(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_grid_png(const std::filesystem::path & path, const GridMap & grid)
{
  std::unique_ptr<std::FILE, int (*)(std::FILE *)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) {
    throw std::runtime_error("cannot write " + path.string());
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(
    png, info, static_cast<png_uint_32>(grid.cols), static_cast<png_uint_32>(grid.rows), 8,
    PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(grid.cols) * 3);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const std::size_t idx = grid.index(r, c);
      const auto px = static_cast<std::size_t>(c) * 3;
      row[px] = static_cast<png_byte>(std::lround(std::clamp(grid.height[idx], 0.0F, 255.0F)));
      row[px + 1] = static_cast<png_byte>(std::lround(255.0F * std::clamp(grid.density[idx], 0.0F, 1.0F)));
      row[px + 2] = 0;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace yolo3d
