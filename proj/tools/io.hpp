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
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sysid/least_squares.hpp"
#include "sysid/lpv_spectral.hpp"
#include "sysid/ltv.hpp"

namespace sysid::cli {

using Json = nlohmann::json;

// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
// Locale-independent parse of a full token. Throws Error(kParseError).
double parse_double(const std::string& token);

/// Writes to a sibling temporary file, then renames it over `path`.
void atomic_write(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd data;

  Eigen::Index column(const std::string& name) const;  // -1 when absent
};

CsvTable parse_csv(const std::string& text);
std::string format_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& data);

// Header t,x1..xn,u1..um; rows are samples at t = k dt.
std::string format_trajectory(const Trajectory& traj);
/// Requires the exact header layout and a strictly increasing, uniformly
/// spaced t column. Throws Error(kParseError).
Trajectory parse_trajectory(const std::string& text);

struct ModelMetadata {
  std::string method;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json to_json(const LTIModel& model, const ModelMetadata& meta);
Json to_json(const LTVModel& model, const ModelMetadata& meta);
Json to_json(const SegmentedModel& model, Eigen::Index steps, const ModelMetadata& meta);
Json to_json(const SpectralEstimate& est, const ModelMetadata& meta);

LTIModel lti_from_json(const Json& j);
LTVModel ltv_from_json(const Json& j);
SegmentedModel segmented_from_json(const Json& j);
SpectralEstimate spectral_from_json(const Json& j);
ModelMetadata metadata_from_json(const Json& j);

// Compact document with a trailing newline.
std::string dump(const Json& j);

}  // namespace sysid::cli
