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

#include "sysid/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/SparseCholesky>

#include "sysid/error.hpp"

namespace sysid {

GroupPartition contiguous_groups(Eigen::Index total, Eigen::Index group_size) {
  if (group_size < 1 || total % group_size != 0)
    throw Error(ErrorCode::kInvalidArgument, "group size must divide the vector length");
  GroupPartition groups(static_cast<std::size_t>(total / group_size));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    groups[g].resize(static_cast<std::size_t>(group_size));
    for (Eigen::Index i = 0; i < group_size; ++i)
      groups[g][static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(g) * group_size + i;
  }
  return groups;
}

void validate_partition(const GroupPartition& groups, Eigen::Index total) {
  std::vector<char> seen(static_cast<std::size_t>(total), 0);
  Eigen::Index count = 0;
  for (const auto& g : groups) {
    for (Eigen::Index i : g) {
      if (i < 0 || i >= total)
        throw Error(ErrorCode::kInvalidArgument, "group index out of range");
      if (seen[static_cast<std::size_t>(i)]++)
        throw Error(ErrorCode::kInvalidArgument,
                    "index " + std::to_string(i) + " appears in more than one group");
      ++count;
    }
  }
  if (count != total)
    throw Error(ErrorCode::kInvalidArgument, "groups do not cover every row of D");
}

Eigen::VectorXd prox_l1(const Eigen::VectorXd& z, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "prox parameter must be >= 0");
  Eigen::VectorXd w(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double mag = std::max(std::abs(z(i)) - t, 0.0);
    w(i) = z(i) >= 0.0 ? mag : -mag;
  }
  return w;
}

Eigen::VectorXd prox_group_l2(const Eigen::VectorXd& z, const GroupPartition& groups, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "prox parameter must be >= 0");
  Eigen::VectorXd w = z;
  for (const auto& g : groups) {
    double sq = 0.0;
    for (Eigen::Index i : g) sq += z(i) * z(i);
    const double norm = std::sqrt(sq);
    const double scale = norm > t ? 1.0 - t / norm : 0.0;
    for (Eigen::Index i : g) w(i) = scale * z(i);
  }
  return w;
}

void ProxProblem::validate() const {
  if (regressors.rows() != targets.size())
    throw Error(ErrorCode::kDimensionMismatch, "regressor rows != target length");
  if (linear_op.cols() != regressors.cols())
    throw Error(ErrorCode::kDimensionMismatch, "D columns != number of parameters");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::kInvalidArgument, "lambda must be finite and >= 0");
  if (penalty == Penalty::kGroupL2) validate_partition(groups, linear_op.rows());
}

double ProxProblem::penalty_value(const Eigen::VectorXd& dk) const {
  switch (penalty) {
    case Penalty::kNone:
      return 0.0;
    case Penalty::kL1:
      return dk.lpNorm<1>();
    case Penalty::kGroupL2: {
      double total = 0.0;
      for (const auto& g : groups) {
        double sq = 0.0;
        for (Eigen::Index i : g) sq += dk(i) * dk(i);
        total += std::sqrt(sq);
      }
      return total;
    }
  }
  return 0.0;
}

double ProxProblem::objective(const Eigen::VectorXd& k) const {
  const Eigen::VectorXd r = targets - regressors * k;
  return 0.5 * r.squaredNorm() + lambda * penalty_value(linear_op * k);
}

double operator_norm_estimate(const SparseMatrix& d, int iterations) {
  if (d.rows() == 0 || d.cols() == 0 || d.nonZeros() == 0) return 0.0;
  // Deterministic, non-symmetric start so no eigenvector is missed by accident.
  Eigen::VectorXd v(d.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.5 * std::sin(1.0 + 3.7 * i);
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd w = d.transpose() * (d * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    est = norm;
    v = w / norm;
  }
  return std::sqrt(est);
}

namespace {

// Solves (A^T A + c M) x = b for a fixed A, shift c, and M = I or M = D^T D.
class ShiftedNormalSolver {
 public:
  ShiftedNormalSolver(const SparseMatrix& a, double c, const SparseMatrix* dtd) : c_(c) {
    const double rows = static_cast<double>(a.rows());
    const double cols = static_cast<double>(a.cols());
    dense_ = a.cols() <= 4000 && static_cast<double>(a.nonZeros()) > 0.1 * rows * cols;
    if (dense_) {
      a_ = Eigen::MatrixXd(a);
      woodbury_ = dtd == nullptr && a.rows() < a.cols();
      Eigen::MatrixXd g;
      if (woodbury_) {
        // (A^T A + cI)^{-1} b = (b - A^T (A A^T + cI)^{-1} A b) / c
        g = a_ * a_.transpose();
        g.diagonal().array() += c_;
      } else {
        g = a_.transpose() * a_;
        if (dtd)
          g += c_ * Eigen::MatrixXd(*dtd);
        else
          g.diagonal().array() += c_;
      }
      llt_.compute(g);
      if (llt_.info() != Eigen::Success)
        throw Error(ErrorCode::kNotPositiveDefinite, "x-update system is not positive definite");
    } else {
      SparseMatrix g = SparseMatrix(a.transpose()) * a;
      if (dtd)
        g += c_ * *dtd;
      else
        g += c_ * sparse_identity(a.cols());
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(g);
      if (ldlt_->info() != Eigen::Success)
        throw Error(ErrorCode::kNotPositiveDefinite, "x-update system is not positive definite");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (!dense_) return ldlt_->solve(b);
    if (!woodbury_) return llt_.solve(b);
    return (b - a_.transpose() * llt_.solve(a_ * b)) / c_;
  }

 private:
  double c_;
  bool dense_ = false;
  bool woodbury_ = false;
  Eigen::MatrixXd a_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt_;
};

Eigen::VectorXd apply_prox(const ProxProblem& p, const Eigen::VectorXd& z, double t) {
  switch (p.penalty) {
    case Penalty::kNone:
      return z;
    case Penalty::kL1:
      return prox_l1(z, t);
    case Penalty::kGroupL2:
      return prox_group_l2(z, p.groups, t);
  }
  return z;
}

// Projects `candidate` onto the subdifferential of the penalty at `dk`.
Eigen::VectorXd project_subgradient(const ProxProblem& p, const Eigen::VectorXd& dk,
                                    const Eigen::VectorXd& candidate, double zero_tol) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(dk.size());
  if (p.penalty == Penalty::kL1) {
    for (Eigen::Index i = 0; i < dk.size(); ++i) {
      if (std::abs(dk(i)) > zero_tol)
        s(i) = dk(i) > 0.0 ? 1.0 : -1.0;
      else
        s(i) = std::clamp(candidate(i), -1.0, 1.0);
    }
  } else if (p.penalty == Penalty::kGroupL2) {
    for (const auto& g : p.groups) {
      double dk_sq = 0.0, c_sq = 0.0;
      for (Eigen::Index i : g) {
        dk_sq += dk(i) * dk(i);
        c_sq += candidate(i) * candidate(i);
      }
      const double dk_norm = std::sqrt(dk_sq);
      const double c_norm = std::sqrt(c_sq);
      for (Eigen::Index i : g) {
        if (dk_norm > zero_tol)
          s(i) = dk(i) / dk_norm;
        else
          s(i) = c_norm > 1.0 ? candidate(i) / c_norm : candidate(i);
      }
    }
  }
  return s;
}

}  // namespace

double subgradient_residual(const ProxProblem& problem, const Eigen::VectorXd& k,
                            const Eigen::VectorXd& candidate, double zero_tol) {
  const Eigen::VectorXd dk = problem.linear_op * k;
  const Eigen::VectorXd s = project_subgradient(problem, dk, candidate, zero_tol);
  const Eigen::VectorXd grad = problem.regressors.transpose() * (problem.regressors * k - problem.targets);
  return (grad + problem.lambda * (problem.linear_op.transpose() * s)).lpNorm<Eigen::Infinity>();
}

ADMMReport linearized_admm(const ProxProblem& problem, const ADMMOptions& options) {
  problem.validate();
  if (!(options.sigma > 0.0) || !(options.step_fraction > 0.0) || options.step_fraction > 1.0)
    throw Error(ErrorCode::kInvalidArgument, "need sigma > 0 and step fraction in (0, 1]");
  if (!(options.relaxation > 0.0 && options.relaxation < 2.0))
    throw Error(ErrorCode::kInvalidArgument, "relaxation must lie in (0, 2)");

  const SparseMatrix& a = problem.regressors;
  const SparseMatrix& d = problem.linear_op;
  const SparseMatrix dt = d.transpose();
  const bool exact = !options.linearize;
  const SparseMatrix dtd = exact ? SparseMatrix(dt * d) : SparseMatrix();
  const double d_norm = operator_norm_estimate(d, options.power_iterations);
  const double alpha = options.relaxation;
  const Eigen::VectorXd aty = a.transpose() * problem.targets;

  // Quantities tied to sigma; rebuilt whenever the penalty is rebalanced.
  double sigma = 0.0, mu = 0.0, c = 0.0, t = 0.0;
  std::unique_ptr<ShiftedNormalSolver> solver;
  auto set_sigma = [&](double value) {
    sigma = value;
    mu = d_norm > 0.0 ? options.step_fraction * sigma / (d_norm * d_norm) : sigma;
    c = 1.0 / mu;
    t = sigma * problem.lambda;
    solver = std::make_unique<ShiftedNormalSolver>(a, exact ? 1.0 / sigma : c,
                                                   exact ? &dtd : nullptr);
  };
  set_sigma(options.sigma);

  Eigen::VectorXd x = options.initial.size() == a.cols() ? options.initial
                                                          : Eigen::VectorXd::Zero(a.cols());
  Eigen::VectorXd dx = d * x;
  Eigen::VectorXd z = apply_prox(problem, dx, t);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(d.rows());

  ADMMReport report;
  double best_objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x, best_z = z, best_y = u;
  double best_r = 0.0, best_s = 0.0;
  int rebalances = 0;

  auto subgradient_of = [&](const Eigen::VectorXd& y_dual) -> Eigen::VectorXd {
    // y_dual = u / sigma is the unscaled multiplier; s = y_dual / lambda.
    if (problem.lambda > 0.0) return y_dual / problem.lambda;
    return Eigen::VectorXd::Zero(y_dual.size());
  };

  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd x_new;
    if (exact) {
      x_new = solver->solve(aty + (dt * (z - u)) / sigma);
    } else {
      const Eigen::VectorXd v = x - (mu / sigma) * (dt * (dx - z + u));
      x_new = solver->solve(aty + c * v);
    }
    const Eigen::VectorXd dx_new = d * x_new;
    const Eigen::VectorXd dx_relaxed = alpha * dx_new + (1.0 - alpha) * z;
    const Eigen::VectorXd z_new = apply_prox(problem, dx_relaxed + u, t);
    u += dx_relaxed - z_new;

    // Stationarity defect A^T (A x - y) + D^T u / sigma at the new iterate,
    // i.e. whatever the (possibly linearized) x-update leaves behind.
    const Eigen::VectorXd step = x_new - x;
    Eigen::VectorXd dual_vec = (dt * (z - z_new)) / sigma;
    if (!exact) dual_vec += (dt * (d * step)) / sigma - c * step;
    const double r = (dx_new - z_new).norm();
    const double s = dual_vec.norm();

    x = x_new;
    dx = dx_new;
    z = z_new;
    report.iterations = it;

    const double obj = problem.objective(x);
    if (options.record_objective) report.objective_trace.push_back(obj);
    if (obj < best_objective) {
      best_objective = obj;
      best_x = x;
      best_z = z;
      best_y = u / sigma;
      best_r = r;
      best_s = s;
    }

    const double primal_tol = options.tolerance * std::max({dx.norm(), z.norm(), 1.0});
    const double dual_tol = options.tolerance * std::max((dt * u).norm() / sigma, 1.0);
    if (r <= primal_tol && s <= dual_tol) {
      report.converged = true;
      report.solution = x;
      report.split = z;
      report.primal_residual = r;
      report.dual_residual = s;
      report.subgradient = subgradient_of(u / sigma);
      report.final_sigma = sigma;
      return report;
    }

    // Residual balancing on a fixed schedule. The penalty settles after a
    // bounded number of changes, after which the iteration is plain ADMM.
    if (options.balance_every > 0 && it % options.balance_every == 0 &&
        rebalances < options.max_rebalances) {
      const double rp = r / primal_tol, rd = s / dual_tol;
      double factor = 1.0;
      if (rp > options.balance_ratio * rd) factor = 0.5;       // tighten coupling
      else if (rd > options.balance_ratio * rp) factor = 2.0;  // loosen coupling
      if (factor != 1.0) {
        const double y_dual_scale = factor;  // u = sigma * y, so u scales with sigma
        u *= y_dual_scale;
        set_sigma(sigma * factor);
        ++rebalances;
        report.rebalance_iterations.push_back(it);
      }
    }
  }
  report.converged = false;
  report.solution = best_x;
  report.split = best_z;
  report.primal_residual = best_r;
  report.dual_residual = best_s;
  report.subgradient = subgradient_of(best_y);
  report.final_sigma = sigma;
  return report;
}

SparseMatrix difference_operator(Eigen::Index length, int order, Eigen::Index block) {
  if (order < 1 || length <= order || block < 1)
    throw Error(ErrorCode::kInvalidArgument, "difference operator needs length > order >= 1");
  // Binomial weights with alternating signs; the highest-index term is +1.
  std::vector<double> w(static_cast<std::size_t>(order) + 1);
  w[0] = 1.0;
  for (int j = 1; j <= order; ++j) w[j] = -w[j - 1] * (order - j + 1) / j;
  std::vector<Eigen::Triplet<double>> trip;
  const Eigen::Index rows = (length - order) * block;
  trip.reserve(static_cast<std::size_t>(rows * (order + 1)));
  for (Eigen::Index t = 0; t < length - order; ++t)
    for (Eigen::Index i = 0; i < block; ++i)
      for (int j = 0; j <= order; ++j)
        trip.emplace_back(t * block + i, (t + order - j) * block + i, w[j]);
  SparseMatrix d(rows, length * block);
  d.setFromTriplets(trip.begin(), trip.end());
  return d;
}

SparseMatrix sparse_identity(Eigen::Index n) {
  SparseMatrix eye(n, n);
  eye.setIdentity();
  return eye;
}

ADMMReport trend_filter_report(const Eigen::VectorXd& y, double lambda, int order,
                               const ADMMOptions& options) {
  if (order != 1 && order != 2)
    throw Error(ErrorCode::kInvalidArgument, "trend filter order must be 1 or 2");
  if (y.size() < order + 1)
    throw Error(ErrorCode::kInvalidArgument, "signal shorter than order + 1");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  ProxProblem p;
  p.regressors = sparse_identity(y.size());
  p.targets = y;
  p.penalty = Penalty::kL1;
  p.linear_op = difference_operator(y.size(), order);
  // ||y - yhat||^2 + lambda ||D yhat||_1 is twice 0.5 ||y - yhat||^2 + (lambda / 2) ||D yhat||_1.
  p.lambda = 0.5 * lambda;
  if (lambda == 0.0) {
    ADMMReport report;
    report.solution = y;
    report.split = p.linear_op * y;
    report.subgradient = Eigen::VectorXd::Zero(report.split.size());
    report.converged = true;
    return report;
  }
  return linearized_admm(p, options);
}

Eigen::VectorXd trend_filter(const Eigen::VectorXd& y, double lambda, int order,
                             const ADMMOptions& options) {
  ADMMReport report = trend_filter_report(y, lambda, order, options);
  if (!report.converged)
    throw Error(ErrorCode::kMaxIterations,
                "trend filter did not converge in " + std::to_string(report.iterations) +
                    " iterations");
  return report.solution;
}

}  // namespace sysid
