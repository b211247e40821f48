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

#include "sysid/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sysid/error.hpp"

namespace sysid {

Trajectory::Trajectory(Eigen::MatrixXd x, Eigen::MatrixXd u, double dt)
    : x_(std::move(x)), u_(std::move(u)), dt_(dt) {
  if (x_.rows() < 2)
    throw Error(ErrorCode::kInvalidArgument, "trajectory needs at least two samples");
  if (x_.rows() != u_.rows())
    throw Error(ErrorCode::kDimensionMismatch,
                "state and input sample counts differ (" + std::to_string(x_.rows()) +
                    " vs " + std::to_string(u_.rows()) + ")");
  if (!(dt_ > 0.0) || !std::isfinite(dt_))
    throw Error(ErrorCode::kInvalidArgument, "sample interval must be positive");
  if (!x_.allFinite() || !u_.allFinite())
    throw Error(ErrorCode::kInvalidArgument, "trajectory contains non-finite entries");
}

Eigen::MatrixXd Trajectory::regressors(Eigen::Index first, Eigen::Index count) const {
  Eigen::MatrixXd z(count, n() + m());
  z.leftCols(n()) = x_.middleRows(first, count);
  z.rightCols(m()) = u_.middleRows(first, count);
  return z;
}

Eigen::MatrixXd Trajectory::targets(Eigen::Index first, Eigen::Index count) const {
  return x_.middleRows(first + 1, count);
}

Eigen::MatrixXd Trajectory::observation_matrix(Eigen::Index t) const {
  const Eigen::Index d = n() + m();
  Eigen::RowVectorXd z(d);
  z << x_.row(t), u_.row(t);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n(), n() * d);
  for (Eigen::Index i = 0; i < n(); ++i) c.block(i, i * d, 1, d) = z;
  return c;
}

namespace {

// Solves min ||Y - Z W||_F^2 + lambda ||W||_F^2 column by column from a thin
// SVD of Z. Returns false when Z is rank deficient and lambda == 0.
bool svd_solve(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, double lambda,
               Eigen::MatrixXd* w, Eigen::VectorXd* singular_values = nullptr,
               Eigen::MatrixXd* v_out = nullptr) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (singular_values) *singular_values = s;
  if (v_out) *v_out = svd.matrixV();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const bool full_rank = z.rows() >= z.cols() && s.size() == z.cols() && smax > 0.0 &&
                         s(s.size() - 1) >= kRankTolerance * smax;
  if (lambda == 0.0 && !full_rank) return false;
  Eigen::VectorXd gain(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double denom = s(i) * s(i) + lambda;
    gain(i) = denom > 0.0 ? s(i) / denom : 0.0;
  }
  *w = svd.matrixV() * gain.asDiagonal() * (svd.matrixU().transpose() * y);
  return true;
}

LSSolution finish(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, Eigen::VectorXd k,
                  const Eigen::VectorXd& s, const Eigen::MatrixXd& v, double lambda,
                  const LSOptions& options) {
  LSSolution sol;
  sol.coefficients = std::move(k);
  sol.residual_sos = (y - a * sol.coefficients).squaredNorm();
  if (options.compute_covariance) {
    const Eigen::Index dof = std::max<Eigen::Index>(a.rows() - a.cols(), 1);
    const double sigma2 =
        options.noise_variance.value_or(sol.residual_sos / static_cast<double>(dof));
    Eigen::VectorXd inv(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = 1.0 / (s(i) * s(i) + lambda);
    Eigen::MatrixXd cov = v * inv.asDiagonal() * v.transpose();
    if (lambda > 0.0 && v.cols() < a.cols()) {
      // Directions outside the row space of A are governed by the ridge alone.
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.cols(), a.cols());
      cov += (eye - v * v.transpose()) / lambda;
    }
    cov = 0.5 * (cov + cov.transpose()).eval();
    sol.param_covariance = sigma2 * cov;
  }
  return sol;
}

}  // namespace

LSSolution solve_ls(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& targets,
                    const LSOptions& options) {
  if (regressors.rows() != targets.size())
    throw Error(ErrorCode::kDimensionMismatch, "regressor rows != target length");
  if (regressors.rows() < regressors.cols())
    throw Error(ErrorCode::kRankDeficient, "fewer equations than unknowns");
  Eigen::MatrixXd k;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
  if (!svd_solve(regressors, targets, 0.0, &k, &s, &v))
    throw Error(ErrorCode::kRankDeficient,
                "smallest singular value below tolerance; regularize the problem");
  return finish(regressors, targets, k.col(0), s, v, 0.0, options);
}

LSSolution solve_ridge(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& targets,
                       double lambda, const LSOptions& options) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "ridge lambda must be >= 0");
  if (regressors.rows() != targets.size())
    throw Error(ErrorCode::kDimensionMismatch, "regressor rows != target length");
  if (lambda == 0.0) return solve_ls(regressors, targets, options);
  Eigen::MatrixXd k;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
  svd_solve(regressors, targets, lambda, &k, &s, &v);
  return finish(regressors, targets, k.col(0), s, v, lambda, options);
}

Eigen::VectorXd params_from_matrices(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index d = A.cols() + B.cols();
  Eigen::VectorXd k(n * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    k.segment(i * d, A.cols()) = A.row(i).transpose();
    k.segment(i * d + A.cols(), B.cols()) = B.row(i).transpose();
  }
  return k;
}

LTIModel matrices_from_params(const Eigen::VectorXd& k, Eigen::Index n, Eigen::Index m) {
  const Eigen::Index d = n + m;
  if (k.size() != n * d)
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector length != n(n+m)");
  LTIModel model{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, m)};
  for (Eigen::Index i = 0; i < n; ++i) {
    model.A.row(i) = k.segment(i * d, n).transpose();
    model.B.row(i) = k.segment(i * d + n, m).transpose();
  }
  return model;
}

LTIFit fit_lti_steps(const Trajectory& traj, Eigen::Index first, Eigen::Index count,
                     double ridge_lambda) {
  if (!(ridge_lambda >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "ridge lambda must be >= 0");
  if (first < 0 || count < 1 || first + count > traj.steps())
    throw Error(ErrorCode::kInvalidArgument, "step range outside trajectory");
  const Eigen::MatrixXd z = traj.regressors(first, count);
  const Eigen::MatrixXd y = traj.targets(first, count);
  Eigen::MatrixXd w;
  if (!svd_solve(z, y, ridge_lambda, &w))
    throw Error(ErrorCode::kInsufficientExcitation,
                "stacked [x u] rows have rank below n + m; add ridge regularization");
  LTIFit fit;
  const Eigen::Index n = traj.n();
  fit.model.A = w.topRows(n).transpose();
  fit.model.B = w.bottomRows(traj.m()).transpose();
  fit.residual_sos = (y - z * w).squaredNorm();
  fit.objective = fit.residual_sos + ridge_lambda * w.squaredNorm();
  return fit;
}

LTIModel fit_lti(const Trajectory& traj, double ridge_lambda) {
  return fit_lti_steps(traj, 0, traj.steps(), ridge_lambda).model;
}

double lti_prediction_sos(const Trajectory& traj, const LTIModel& model) {
  const Eigen::MatrixXd z = traj.regressors(0, traj.steps());
  Eigen::MatrixXd ab(traj.n(), traj.n() + traj.m());
  ab << model.A, model.B;
  return (traj.targets(0, traj.steps()) - z * ab.transpose()).squaredNorm();
}

}  // namespace sysid
