// Copyright 2026 The sysid Authors
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

#include "sysid/random.hpp"

#include <cmath>
#include <numbers>

namespace sysid {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

std::uint64_t CounterRng::bits(std::uint64_t index) const {
  return mix64(key_ ^ mix64(index));
}

double CounterRng::uniform(std::uint64_t index) const {
  // 53 random bits, shifted off zero by half an ulp.
  return (static_cast<double>(bits(index) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t index) const {
  // Normals read from the upper half of the counter space so that mixing
  // uniform and normal draws on one stream never reuses a counter.
  constexpr std::uint64_t kNormalBase = 1ULL << 63;
  const double u1 = uniform(kNormalBase | (2 * index));
  const double u2 = uniform(kNormalBase | (2 * index + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::VectorXd RandomStream::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Eigen::MatrixXd RandomStream::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  // Row-major fill so that the draw order reads naturally.
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

}  // namespace sysid
