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

#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace sysid {

using SparseMatrix = Eigen::SparseMatrix<double>;
// Each group lists the entries (of D k) it owns.
using GroupPartition = std::vector<std::vector<Eigen::Index>>;

enum class Penalty { kNone, kL1, kGroupL2 };

// Consecutive groups of `group_size` entries covering [0, total).
GroupPartition contiguous_groups(Eigen::Index total, Eigen::Index group_size);

// Throws unless every index in [0, total) appears in exactly one group.
void validate_partition(const GroupPartition& groups, Eigen::Index total);

/// Soft threshold: sign(z_i) max(|z_i| - t, 0).
Eigen::VectorXd prox_l1(const Eigen::VectorXd& z, double t);

/// Block soft threshold: max(0, 1 - t / ||z_g||) z_g per group.
Eigen::VectorXd prox_group_l2(const Eigen::VectorXd& z, const GroupPartition& groups, double t);

/// minimize 0.5 ||y - A k||^2 + lambda * h(D k), with h one of the penalties.
struct ProxProblem {
  SparseMatrix regressors;
  Eigen::VectorXd targets;
  Penalty penalty = Penalty::kL1;
  GroupPartition groups;  // used by kGroupL2
  SparseMatrix linear_op;
  double lambda = 0.0;

  void validate() const;
  double penalty_value(const Eigen::VectorXd& dk) const;
  double objective(const Eigen::VectorXd& k) const;
};

struct ADMMOptions {
  double sigma = 1.0;          // initial penalty parameter of the splitting
  double step_fraction = 0.95; // mu = step_fraction * sigma / ||D||^2
  int power_iterations = 50;
  double tolerance = 1e-6;
  int max_iterations = 20000;
  // Over-relaxation factor in (0, 2); 1 disables it.
  double relaxation = 1.0;
  bool record_objective = false;
  // Linearize the coupling term in the x-update (x-system A^T A + I / mu).
  // The default solves with A^T A + D^T D / sigma exactly, which converges in
  // far fewer iterations on long difference operators.
  bool linearize = false;
  // Residual balancing: every `balance_every` iterations, halve or double
  // sigma when one relative residual exceeds the other by `balance_ratio`, at
  // most `max_rebalances` times. Set balance_every = 0 for a fixed sigma.
  int balance_every = 10;
  double balance_ratio = 10.0;
  int max_rebalances = 30;
  // Optional warm start (size K).
  Eigen::VectorXd initial;
};

struct ADMMReport {
  Eigen::VectorXd solution;
  // Split variable z ~ D k at the returned iterate; exactly sparse.
  Eigen::VectorXd split;
  // Scaled dual variable divided by sigma * lambda; lies in the subdifferential
  // of h at `split`.
  Eigen::VectorXd subgradient;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
  double final_sigma = 0.0;
  // Iterations after which sigma was changed by residual balancing.
  std::vector<int> rebalance_iterations;
  std::vector<double> objective_trace;
};

/// ADMM on the split D k = z. The smooth term is always handled exactly; the
/// coupling term is either solved exactly or linearized around the current
/// iterate (see ADMMOptions::linearize).
ADMMReport linearized_admm(const ProxProblem& problem, const ADMMOptions& options = {});

/// Largest singular value of D by power iteration on D^T D.
double operator_norm_estimate(const SparseMatrix& d, int iterations);

/// ||A^T (A k - y) + lambda D^T s||_inf where s is `candidate` projected onto
/// the subdifferential of h at D k; entries (or groups) of D k with magnitude
/// below `zero_tol` count as zero.
double subgradient_residual(const ProxProblem& problem, const Eigen::VectorXd& k,
                            const Eigen::VectorXd& candidate, double zero_tol);

/// Finite-difference operator of the given order acting on a sequence of T
/// blocks of size `block`: ((T - order) * block) x (T * block).
SparseMatrix difference_operator(Eigen::Index length, int order, Eigen::Index block = 1);

SparseMatrix sparse_identity(Eigen::Index n);

/// minimize ||y - yhat||^2 + lambda ||D_order yhat||_1.
ADMMReport trend_filter_report(const Eigen::VectorXd& y, double lambda, int order,
                               const ADMMOptions& options = {});
/// Same, returning the fit. Throws Error(kMaxIterations) if ADMM stalls.
Eigen::VectorXd trend_filter(const Eigen::VectorXd& y, double lambda, int order,
                             const ADMMOptions& options = {});

}  // namespace sysid
