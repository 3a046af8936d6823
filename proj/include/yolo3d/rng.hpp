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

#ifndef YOLO3D__RNG_HPP_
#define YOLO3D__RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace yolo3d
{

using Rng = std::mt19937_64;

/// Independent generator for one named consumer of a run seed, so adding draws
/// in one module never shifts another module's sequence.
inline Rng make_stream(std::uint64_t seed, std::string_view name)
{
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{
    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

/// Uniform double in [lo, hi) built from raw engine bits, so sequences match
/// across standard library implementations.
inline double uniform(Rng & rng, double lo, double hi)
{
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

}  // namespace yolo3d

#endif  // YOLO3D__RNG_HPP_
