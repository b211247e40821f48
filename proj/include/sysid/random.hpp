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

#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace sysid {

// Counter-based random numbers. A draw is a pure function of
// (seed, stream, index), so results never depend on evaluation order or on
// how work is split between threads.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t index) const;
  // Standard normal (Box-Muller on the uniform pair 2*index, 2*index + 1).
  double normal(std::uint64_t index) const;

  std::uint64_t bits(std::uint64_t index) const;

 private:
  std::uint64_t key_;
};

// Sequential view over one CounterRng stream.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream)
      : rng_(seed, stream) {}

  double uniform() { return rng_.uniform(counter_++); }
  double normal() { return rng_.normal(counter_++); }
  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace sysid
