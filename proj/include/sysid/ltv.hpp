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

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sysid/kalman.hpp"
#include "sysid/least_squares.hpp"
#include "sysid/prox.hpp"

namespace sysid {

/// x_{t+1} = A_t x_t + B_t u_t, one (A_t, B_t) per step of the trajectory it
/// was fitted on.
struct LTVModel {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> B;
  // Posterior covariance of k_t, when the estimator provides one.
  std::optional<std::vector<Eigen::MatrixXd>> param_covs;
  std::string method;
  double lambda = 0.0;

  Eigen::Index steps() const { return static_cast<Eigen::Index>(A.size()); }
  Eigen::Index n() const { return A.empty() ? 0 : A.front().rows(); }
  Eigen::Index m() const { return B.empty() ? 0 : B.front().cols(); }

  // One row k_t^T per step.
  Eigen::MatrixXd params() const;
  static LTVModel from_params(const Eigen::MatrixXd& params, Eigen::Index n, Eigen::Index m);
};

/// Sum over steps of ||x_{t+1} - A_t x_t - B_t u_t||^2.
double ltv_prediction_sos(const Trajectory& traj, const LTVModel& model);

/// How k_t is assumed to evolve: P(q) k_t = w_t with q the forward shift and P
/// monic. The penalty on the parameters is lambda^2 sum_t ||P(q) k_t||^2.
class ParameterEvolution {
 public:
  // k_{t+1} = k_t + w_t.
  static ParameterEvolution random_walk();
  // k_{t+2} - 2 k_{t+1} + k_t = w_t.
  static ParameterEvolution second_order();
  /// P(z) = z^d + c[d-1] z^{d-1} + ... + c[0] from the non-leading
  /// coefficients c (lowest degree first). Requires d >= 1 and c[0] != 0.
  static ParameterEvolution polynomial(std::vector<double> lower_coefficients);

  Eigen::Index degree() const { return static_cast<Eigen::Index>(coeffs_.size()); }
  const std::vector<double>& coefficients() const { return coeffs_; }
  // Coefficients of P lowest degree first, including the leading 1.
  std::vector<double> full_polynomial() const;

 private:
  explicit ParameterEvolution(std::vector<double> c) : coeffs_(std::move(c)) {}
  std::vector<double> coeffs_;
};

struct FitL2Options {
  // Optional PD weight Lambda in the penalty (P(q) k)^T Lambda (P(q) k).
  std::optional<Eigen::MatrixXd> step_weight;
  // Prior on k_t; see GaussianPrior (its map field is ignored).
  PriorFunction prior;
  // Initial covariance of the parameter state.
  double initial_variance = 1e4;
  // Passes re-centring the initial mean on the smoothed one, removing the
  // pull of the finite initial covariance.
  int max_recentre_passes = 20;
  bool compute_covariances = true;
};

/// Minimizes sum_t ||x_{t+1} - C_t k_t||^2 + lambda^2 sum_t ||P(q) k_t||^2
/// (plus prior terms) with a Kalman smoother on the parameter state.
/// Throws Error(kIllPosed) for lambda <= 0 or unidentifiable data.
LTVModel fit_l2(const Trajectory& traj, double lambda,
                const ParameterEvolution& evolution = ParameterEvolution::random_walk(),
                const FitL2Options& options = {});

/// Profile log-likelihood of the data under k_{t+1} = H k_t + w, y = C k + e,
/// e ~ N(0, s^2 I), w ~ N(0, s^2 lambda^-2 I), with s^2 maximized out.
double ltv_loglik(const Trajectory& traj, double lambda, const ParameterEvolution& evolution,
                  double initial_variance = 1e4);

struct LambdaSelection {
  double best_lambda = 0.0;
  std::vector<double> loglik;
};

LambdaSelection select_lambda_ml(const Trajectory& traj, const std::vector<double>& grid,
                                 const ParameterEvolution& evolution =
                                     ParameterEvolution::random_walk());

enum class SparsePenalty { kGroup, kL1 };

/// Minimizes ||y - y_hat||^2 + lambda sum_t ||(D k)_t|| with D the order-th
/// time difference; kGroup uses one 2-norm per time step, kL1 the 1-norm.
/// The ADMM report of the solve is written to `report` when given.
LTVModel fit_sparse(const Trajectory& traj, double lambda, int order = 1,
                    SparsePenalty penalty = SparsePenalty::kGroup,
                    const ADMMOptions& admm = {}, ADMMReport* report = nullptr);

struct SegmentedModel {
  // Index of the first step of every segment but the first.
  std::vector<Eigen::Index> breakpoints;
  std::vector<LTIModel> segment_models;
  std::vector<double> segment_costs;
  double total_cost = 0.0;

  LTVModel to_ltv(Eigen::Index steps) const;
};

struct SegmentOptions {
  double ridge_lambda = 1e-8;
  // Shortest admissible segment; zero means n + m.
  Eigen::Index min_length = 0;
};

/// Globally optimal split of the steps into M + 1 segments minimizing the sum
/// of per-segment LTI costs (residual plus ridge term). Ties keep the earliest
/// breakpoint. Runs in O(T^2 (n + m)^2 n + T^2 M). Throws
/// Error(kInfeasibleSegmentation) when the steps cannot hold M + 1 segments.
SegmentedModel fit_segments_dp(const Trajectory& traj, Eigen::Index M,
                               const SegmentOptions& options = {});

/// Cost of fitting one LTI model to steps [first, first + count), as used by
/// fit_segments_dp.
double segment_cost(const Trajectory& traj, Eigen::Index first, Eigen::Index count,
                    double ridge_lambda);

struct KnotRule {
  static KnotRule top(Eigen::Index count) { return {count, 0.0}; }
  static KnotRule above(double threshold) { return {-1, threshold}; }
  Eigen::Index count;
  double threshold;
};

/// a_t = ||(D_order k)_t||_2. Returns t + 1 (the first step after the change)
/// for the `count` largest a_t or for every a_t above the threshold, sorted.
std::vector<Eigen::Index> detect_knots(const LTVModel& model, int order, KnotRule rule);

/// Step-change magnitudes a_t = ||(D_order k)_t||_2.
Eigen::VectorXd parameter_changes(const LTVModel& model, int order);

/// Independent LTI fit on every segment delimited by `knots`.
SegmentedModel refine_two_step(const Trajectory& traj, const std::vector<Eigen::Index>& knots,
                               double ridge_lambda = 0.0);

struct Identifiability {
  bool well_posed = false;
  double min_singular_value = 0.0;
  double max_singular_value = 0.0;
};

/// Rank test on the stacked regressor rows [x_t^T u_t^T]: well posed when the
/// smallest singular value exceeds 1e-8 times the largest.
Identifiability check_identifiability(const Trajectory& traj, int order = 1);

}  // namespace sysid
