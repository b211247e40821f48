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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sysid/error.hpp"
#include "sysid/lpv_spectral.hpp"
#include "sysid/trajopt.hpp"

namespace sysid::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

/// Parses and runs one command. args excludes the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(const Error& e);

// 10^-2 .. 10^4, one point per decade.
std::vector<double> auto_lambda_grid();
// 10^-8 .. 10^2, one point per decade.
std::vector<double> gcv_ridge_grid();

/// Comma-separated list; each entry is a number optionally suffixed by "pi"
/// ("4pi" is 4 pi, "pi" alone is pi).
Eigen::VectorXd parse_frequencies(const std::string& list);
struct RegularizerChoice {
  SpectralRegularizer regularizer;
  // Ridge with the weight chosen by generalized cross-validation.
  bool gcv = false;
};
// none | gcv | ridge:L | l1:L | group:L
RegularizerChoice parse_regularizer(const std::string& text);

// t,step_norm with t the first step after each change.
std::string step_norm_csv(const Eigen::VectorXd& changes);
// iteration,cost,kl
std::string rl_trace_csv(const RLResult& result);
// omega,power
std::string power_csv(const SpectralEstimate& est);
/// omega,v,amplitude,phase and, with a level, amplitude_lo,amplitude_hi,
/// phase_lo,phase_hi from n_mc coefficient draws. Phase is nan where the
/// amplitude vanishes.
std::string spectral_table_csv(const SpectralEstimate& est, const Eigen::VectorXd& v_grid,
                               std::optional<double> level, Eigen::Index n_mc,
                               std::uint64_t seed);

}  // namespace sysid::cli
