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

#include "sysid/error.hpp"

namespace sysid {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kInsufficientExcitation: return "InsufficientExcitation";
    case ErrorCode::kMaxIterations: return "MaxIterations";
    case ErrorCode::kSingularInnovation: return "SingularInnovation";
    case ErrorCode::kSingularSum: return "SingularSum";
    case ErrorCode::kSingularPredictedCov: return "SingularPredictedCov";
    case ErrorCode::kDegenerateWeights: return "DegenerateWeights";
    case ErrorCode::kIllPosed: return "IllPosed";
    case ErrorCode::kInfeasibleSegmentation: return "InfeasibleSegmentation";
    case ErrorCode::kPhaseUndefined: return "PhaseUndefined";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kNonPDQuu: return "NonPDQuu";
    case ErrorCode::kLineSearchFailed: return "LineSearchFailed";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMaxIterations:
    case ErrorCode::kSingularInnovation:
    case ErrorCode::kSingularSum:
    case ErrorCode::kSingularPredictedCov:
    case ErrorCode::kDegenerateWeights:
    case ErrorCode::kNotPositiveDefinite:
    case ErrorCode::kNonPDQuu:
    case ErrorCode::kLineSearchFailed:
    case ErrorCode::kSingularCovariance:
      return true;
    default:
      return false;
  }
}

}  // namespace sysid
