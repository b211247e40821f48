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

#include <Eigen/Dense>

namespace sysid {

/// Time-indexed record of states x_t (rows of `x`) and inputs u_t (rows of
/// `u`), sampled every `dt` seconds. Step t maps (x_t, u_t) to x_{t+1}, so a
/// record of T samples holds T - 1 steps.
class Trajectory {
 public:
  Trajectory(Eigen::MatrixXd x, Eigen::MatrixXd u, double dt = 1.0);

  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::MatrixXd& u() const { return u_; }
  double dt() const { return dt_; }

  Eigen::Index length() const { return x_.rows(); }
  Eigen::Index steps() const { return x_.rows() - 1; }
  Eigen::Index n() const { return x_.cols(); }
  Eigen::Index m() const { return u_.cols(); }
  // Number of entries in k_t = vec([A_t B_t]^T).
  Eigen::Index num_params() const { return n() * (n() + m()); }

  // Stacked regressor rows [x_t^T u_t^T] for steps [first, first + count).
  Eigen::MatrixXd regressors(Eigen::Index first, Eigen::Index count) const;
  // Targets x_{t+1}^T for the same steps.
  Eigen::MatrixXd targets(Eigen::Index first, Eigen::Index count) const;

  // Observation map I_n (x) [x_t^T u_t^T] of size n x K.
  Eigen::MatrixXd observation_matrix(Eigen::Index t) const;

 private:
  Eigen::MatrixXd x_;
  Eigen::MatrixXd u_;
  double dt_;
};

struct LTIModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;

  Eigen::VectorXd predict(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return A * x + B * u;
  }
};

struct LSSolution {
  Eigen::VectorXd coefficients;
  double residual_sos = 0.0;
  // sigma^2 (A^T A + lambda I)^{-1}, filled only on request.
  std::optional<Eigen::MatrixXd> param_covariance;
};

struct LSOptions {
  bool compute_covariance = false;
  // Noise variance for the covariance. When empty, residual_sos / (N - K).
  std::optional<double> noise_variance;
};

// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-10;

/// Ordinary least squares min ||y - A k||^2 through an SVD of A.
/// Throws Error(kRankDeficient) when A is numerically rank deficient.
LSSolution solve_ls(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& targets,
                    const LSOptions& options = {});

/// Ridge regression, (A^T A + lambda I) k = A^T y, solved through the SVD of A
/// with filter factors s / (s^2 + lambda). lambda = 0 defers to solve_ls.
LSSolution solve_ridge(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& targets,
                       double lambda, const LSOptions& options = {});

// k = vec([A B]^T): the rows of [A B] laid end to end.
Eigen::VectorXd params_from_matrices(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
LTIModel matrices_from_params(const Eigen::VectorXd& k, Eigen::Index n, Eigen::Index m);

struct LTIFit {
  LTIModel model;
  double residual_sos = 0.0;
  // residual_sos + ridge * ||k||^2, the value actually minimized.
  double objective = 0.0;
};

/// Least-squares LTI fit over steps [first, first + count) of a trajectory.
LTIFit fit_lti_steps(const Trajectory& traj, Eigen::Index first, Eigen::Index count,
                     double ridge_lambda);

/// Fit x_{t+1} = A x_t + B u_t over the whole trajectory.
/// Throws Error(kInsufficientExcitation) when the stacked [x u] rows have
/// rank below n + m and ridge_lambda is zero.
LTIModel fit_lti(const Trajectory& traj, double ridge_lambda = 0.0);

/// Sum over steps of ||x_{t+1} - A x_t - B u_t||^2.
double lti_prediction_sos(const Trajectory& traj, const LTIModel& model);

}  // namespace sysid
