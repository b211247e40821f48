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

#include "sysid/ltv.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sysid/error.hpp"
#include "sysid/random.hpp"
#include "sysid/simulators.hpp"

namespace sysid {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Trajectory random_trajectory(Index n, Index m, Index length, std::uint64_t seed) {
  RandomStream rng(seed, 11);
  return Trajectory(rng.normal_matrix(length, n), rng.normal_matrix(length, m));
}

// Noiseless rollout of a random stable system under white-noise input.
Trajectory lti_rollout(const LTIModel& sys, Index length, std::uint64_t seed) {
  RandomStream rng(seed, 12);
  const Index n = sys.A.rows(), m = sys.B.cols();
  MatrixXd x(length, n);
  const MatrixXd u = rng.normal_matrix(length, m);
  x.row(0) = rng.normal_vector(n).transpose();
  for (Index t = 0; t + 1 < length; ++t)
    x.row(t + 1) = (sys.A * x.row(t).transpose() + sys.B * u.row(t).transpose()).transpose();
  return Trajectory(x, u);
}

MatrixXd kron_identity(Index copies, const MatrixXd& w) {
  MatrixXd out = MatrixXd::Zero(copies * w.rows(), copies * w.cols());
  for (Index i = 0; i < copies; ++i) out.block(i * w.rows(), i * w.cols(), w.rows(), w.cols()) = w;
  return out;
}

VectorXd stacked(const LTVModel& model) {
  const MatrixXd p = model.params().transpose();
  return Eigen::Map<const VectorXd>(p.data(), p.size());
}

double rel_err(const VectorXd& a, const VectorXd& b) { return (a - b).norm() / b.norm(); }

// Hessian of the smooth objective (halved), without prior terms.
MatrixXd dense_hessian(const Trajectory& traj, double lambda, const std::vector<double>& poly,
                       const MatrixXd& weight) {
  const MatrixXd a = oracle::ltv_dense_regressor(traj);
  const MatrixXd d = oracle::ltv_dense_difference(traj.steps(), poly, traj.num_params());
  const Index rows = d.rows() / traj.num_params();
  return a.transpose() * a + lambda * lambda * d.transpose() * kron_identity(rows, weight) * d;
}

TEST(FitL2, FirstOrderMatchesDenseClosedForm) {
  struct Case { Index n, m, length; double lambda; };
  const std::vector<Case> cases = {{1, 1, 6, 1.0},    {1, 1, 40, 0.1},  {2, 1, 30, 10.0},
                                   {2, 2, 20, 1000.0}, {3, 1, 12, 3.0}, {1, 0, 50, 0.5}};
  std::uint64_t seed = 0;
  for (const Case& c : cases) {
    const Trajectory traj = random_trajectory(c.n, c.m, c.length, ++seed);
    ASSERT_LE(traj.steps() * traj.num_params(), 200);
    const MatrixXd h = dense_hessian(traj, c.lambda, {-1.0, 1.0},
                                     MatrixXd::Identity(traj.num_params(), traj.num_params()));
    const VectorXd want = h.ldlt().solve(oracle::ltv_dense_regressor(traj).transpose() * oracle::ltv_dense_targets(traj));
    const LTVModel got = fit_l2(traj, c.lambda);
    EXPECT_LT(rel_err(stacked(got), want), 1e-6) << c.n << " " << c.m << " " << c.length;
    EXPECT_EQ(got.method, "l2-order1");
    EXPECT_EQ(got.lambda, c.lambda);
    EXPECT_EQ(got.steps(), traj.steps());
  }
}

TEST(FitL2, HigherOrderEvolutionsMatchDense) {
  const Trajectory traj = random_trajectory(2, 1, 25, 40);
  const Index k = traj.num_params();
  const MatrixXd rhs = oracle::ltv_dense_regressor(traj).transpose() * oracle::ltv_dense_targets(traj);
  struct Case { ParameterEvolution evo; std::vector<double> poly; };
  const std::vector<Case> cases = {
      {ParameterEvolution::second_order(), {1.0, -2.0, 1.0}},
      {ParameterEvolution::polynomial({0.5, -1.2}), {0.5, -1.2, 1.0}},
      {ParameterEvolution::polynomial({-0.3, 0.2, -0.9}), {-0.3, 0.2, -0.9, 1.0}},
      {ParameterEvolution::polynomial({-0.8}), {-0.8, 1.0}}};
  for (const Case& c : cases) {
    EXPECT_EQ(c.evo.full_polynomial(), c.poly);
    for (double lambda : {0.3, 5.0}) {
      const VectorXd want =
          dense_hessian(traj, lambda, c.poly, MatrixXd::Identity(k, k)).ldlt().solve(rhs);
      const LTVModel got = fit_l2(traj, lambda, c.evo);
      EXPECT_LT(rel_err(stacked(got), want), 1e-6) << c.poly.size() << " " << lambda;
    }
  }
}

TEST(FitL2, CovariancesAreMarginalsOfInverseHessian) {
  // The finite initial covariance adds P0^-1 on the first `degree` blocks.
  const Trajectory traj = random_trajectory(1, 1, 20, 41);
  const Index k = traj.num_params(), steps = traj.steps();
  for (const auto& [evo, poly] : std::vector<std::pair<ParameterEvolution, std::vector<double>>>{
           {ParameterEvolution::random_walk(), {-1.0, 1.0}},
           {ParameterEvolution::second_order(), {1.0, -2.0, 1.0}}}) {
    MatrixXd h = dense_hessian(traj, 2.0, poly, MatrixXd::Identity(k, k));
    h.topLeftCorner(evo.degree() * k, evo.degree() * k).diagonal().array() += 1e-4;
    const MatrixXd cov = h.inverse();
    const LTVModel got = fit_l2(traj, 2.0, evo);
    ASSERT_TRUE(got.param_covs.has_value());
    ASSERT_EQ(static_cast<Index>(got.param_covs->size()), steps);
    for (Index t = 0; t < steps; ++t) {
      const MatrixXd& p = (*got.param_covs)[static_cast<std::size_t>(t)];
      const MatrixXd want = cov.block(t * k, t * k, k, k);
      EXPECT_LT((p - want).norm(), 1e-8 * want.norm()) << t;
      EXPECT_LT((p - p.transpose()).norm(), 1e-12);
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(p).eigenvalues().minCoeff(), 0.0);
    }
  }
  FitL2Options opts;
  opts.compute_covariances = false;
  EXPECT_FALSE(fit_l2(traj, 2.0, ParameterEvolution::random_walk(), opts).param_covs);
}

TEST(FitL2, StepWeightMatchesDense) {
  const Trajectory traj = random_trajectory(2, 1, 15, 42);
  const Index k = traj.num_params();
  RandomStream rng(42, 1);
  const MatrixXd g = rng.normal_matrix(k, k);
  const MatrixXd weight = g * g.transpose() + 0.5 * MatrixXd::Identity(k, k);
  FitL2Options opts;
  opts.step_weight = weight;
  const VectorXd want = dense_hessian(traj, 1.5, {-1.0, 1.0}, weight)
                            .ldlt()
                            .solve(oracle::ltv_dense_regressor(traj).transpose() * oracle::ltv_dense_targets(traj));
  EXPECT_LT(rel_err(stacked(fit_l2(traj, 1.5, ParameterEvolution::random_walk(), opts)), want),
            1e-6);

  opts.step_weight = -MatrixXd::Identity(k, k);
  EXPECT_THROW(fit_l2(traj, 1.5, ParameterEvolution::random_walk(), opts), Error);
  opts.step_weight = MatrixXd::Identity(k + 1, k + 1);
  EXPECT_THROW(fit_l2(traj, 1.5, ParameterEvolution::random_walk(), opts), Error);
}

TEST(FitL2, PriorActsAsQuadraticPenalty) {
  // Objective gains (k_t - mu_t)^T Sigma_t^-1 (k_t - mu_t) at the prior steps.
  const Trajectory traj = random_trajectory(1, 2, 18, 43);
  const Index k = traj.num_params(), steps = traj.steps();
  RandomStream rng(43, 2);
  std::vector<std::optional<GaussianPrior>> priors(static_cast<std::size_t>(steps));
  for (Index t : {0, 4, 5, 16}) {
    const MatrixXd g = rng.normal_matrix(k, k);
    priors[static_cast<std::size_t>(t)] =
        GaussianPrior{rng.normal_vector(k), 0.1 * (g * g.transpose()) + 0.05 * MatrixXd::Identity(k, k), {}};
  }
  MatrixXd h = dense_hessian(traj, 3.0, {-1.0, 1.0}, MatrixXd::Identity(k, k));
  VectorXd rhs = oracle::ltv_dense_regressor(traj).transpose() * oracle::ltv_dense_targets(traj);
  for (Index t = 0; t < steps; ++t) {
    const auto& p = priors[static_cast<std::size_t>(t)];
    if (!p) continue;
    const MatrixXd info = p->cov.inverse();
    h.block(t * k, t * k, k, k) += info;
    rhs.segment(t * k, k) += info * p->mean;
  }
  const VectorXd want = h.ldlt().solve(rhs);
  FitL2Options opts;
  opts.prior = [&](Index t) { return priors[static_cast<std::size_t>(t)]; };
  EXPECT_LT(rel_err(stacked(fit_l2(traj, 3.0, ParameterEvolution::random_walk(), opts)), want),
            1e-6);
}

TEST(FitL2, AbsentOrVaguePriorEqualsNoPrior) {
  const Trajectory traj = random_trajectory(2, 1, 30, 44);
  const VectorXd plain = stacked(fit_l2(traj, 2.0));
  FitL2Options none;
  none.prior = [](Index) { return std::optional<GaussianPrior>(); };
  EXPECT_LT((stacked(fit_l2(traj, 2.0, ParameterEvolution::random_walk(), none)) - plain)
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
  const Index k = traj.num_params();
  FitL2Options vague;
  vague.prior = [k](Index) {
    return std::optional<GaussianPrior>(
        GaussianPrior{VectorXd::Constant(k, 5.0), 1e14 * MatrixXd::Identity(k, k), {}});
  };
  EXPECT_LT((stacked(fit_l2(traj, 2.0, ParameterEvolution::random_walk(), vague)) - plain)
                .cwiseAbs()
                .maxCoeff(),
            1e-8);
}

TEST(FitL2, ConstantSystemGivesConstantParameters) {
  const LTIModel sys = random_stable_linear(3, 0.4, 7, 2);
  const Trajectory traj = lti_rollout(sys, 120, 7);
  const VectorXd lti = params_from_matrices(fit_lti(traj).A, fit_lti(traj).B);
  const MatrixXd p = fit_l2(traj, 10.0).params();
  for (Index t = 0; t < p.rows(); ++t)
    EXPECT_LT((p.row(t).transpose() - lti).cwiseAbs().maxCoeff(), 1e-4) << t;
  EXPECT_LT((lti - params_from_matrices(sys.A, sys.B)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitL2, PredictionErrorNondecreasingInLambda) {
  const DriftingLTVData d = gen_drifting_ltv();
  double prev = -1.0;
  for (double lambda : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
    FitL2Options opts;
    opts.compute_covariances = false;
    const double sos =
        ltv_prediction_sos(d.traj, fit_l2(d.traj, lambda, ParameterEvolution::random_walk(), opts));
    EXPECT_GE(sos, prev) << lambda;
    prev = sos;
  }
}

TEST(FitL2, TracksDriftBestNearNoiseRatio) {
  // sigma_v / sigma_w = 10 in the default generator.
  const DriftingLTVData d = gen_drifting_ltv();
  auto err = [&](double lambda) {
    return (fit_l2(d.traj, lambda).params() - d.true_params).squaredNorm();
  };
  const double at10 = err(10.0);
  EXPECT_LT(at10, err(0.1));
  EXPECT_LT(at10, err(1000.0));
  EXPECT_LT(at10, (fit_l2(d.traj, 1e6).params() - d.true_params).squaredNorm());
}

TEST(FitL2, RejectsIllPosedProblems) {
  const Trajectory traj = random_trajectory(2, 1, 20, 45);
  EXPECT_THROW(fit_l2(traj, 0.0), Error);
  EXPECT_THROW(fit_l2(traj, -1.0), Error);
  EXPECT_THROW(fit_l2(traj, std::numeric_limits<double>::quiet_NaN()), Error);
  try {
    fit_l2(traj, 0.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIllPosed);
  }
  // u = 0 leaves B unidentifiable.
  const Trajectory no_input(traj.x(), MatrixXd::Zero(20, 1));
  try {
    fit_l2(no_input, 1.0);
    ADD_FAILURE() << "expected IllPosed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIllPosed);
  }
}

TEST(ParameterEvolutionTest, ValidatesPolynomial) {
  EXPECT_THROW(ParameterEvolution::polynomial({}), Error);
  EXPECT_THROW(ParameterEvolution::polynomial({0.0, 1.0}), Error);
  EXPECT_THROW(ParameterEvolution::polynomial({std::numeric_limits<double>::infinity()}), Error);
  EXPECT_EQ(ParameterEvolution::random_walk().degree(), 1);
  EXPECT_EQ(ParameterEvolution::second_order().degree(), 2);
  EXPECT_EQ(ParameterEvolution::second_order().full_polynomial(), (std::vector<double>{1, -2, 1}));
}

TEST(LtvLoglik, MatchesDenseGaussianDensity) {
  // y ~ N(A_tilde (1 x k0), s^2 (A_tilde Sigma_k A_tilde^T + I)) with the
  // random-walk prior Cov(k_t, k_s) = P0 + min(t, s) / lambda^2, s^2 profiled.
  const Trajectory traj = random_trajectory(1, 1, 16, 46);
  const Index k = traj.num_params(), steps = traj.steps();
  const LTIModel start = fit_lti(traj, 1e-10);
  const VectorXd k0 = params_from_matrices(start.A, start.B);
  const MatrixXd a = oracle::ltv_dense_regressor(traj);
  for (double lambda : {0.2, 3.0, 40.0}) {
    MatrixXd sk(steps * k, steps * k);
    for (Index t = 0; t < steps; ++t)
      for (Index s = 0; s < steps; ++s)
        sk.block(t * k, s * k, k, k) =
            (1e4 + static_cast<double>(std::min(t, s)) / (lambda * lambda)) * MatrixXd::Identity(k, k);
    const MatrixXd sy = a * sk * a.transpose() + MatrixXd::Identity(a.rows(), a.rows());
    const VectorXd q = oracle::ltv_dense_targets(traj) - a * k0.replicate(steps, 1);
    const Eigen::LLT<MatrixXd> llt(sy);
    const double count = static_cast<double>(q.size());
    const double s2 = q.dot(llt.solve(q)) / count;
    const double logdet = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const double want = -0.5 * (count * std::log(2 * std::numbers::pi * s2) + logdet + count);
    EXPECT_NEAR(ltv_loglik(traj, lambda, ParameterEvolution::random_walk()), want,
                1e-8 * std::abs(want))
        << lambda;
  }
}

TEST(SelectLambda, SingleElementGrid) {
  const Trajectory traj = random_trajectory(2, 1, 30, 47);
  const LambdaSelection sel = select_lambda_ml(traj, {7.0});
  EXPECT_EQ(sel.best_lambda, 7.0);
  ASSERT_EQ(sel.loglik.size(), 1u);
  EXPECT_TRUE(std::isfinite(sel.loglik[0]));
  EXPECT_THROW(select_lambda_ml(traj, {}), Error);
  EXPECT_THROW(select_lambda_ml(traj, {1.0, 0.0}), Error);
}

TEST(SelectLambda, ArgmaxIsGridMaximum) {
  const DriftingLTVData d = gen_drifting_ltv();
  const LambdaSelection sel = select_lambda_ml(d.traj, {0.1, 1.0, 10.0, 100.0, 1000.0});
  const auto best = std::max_element(sel.loglik.begin(), sel.loglik.end());
  EXPECT_EQ(sel.best_lambda, (std::vector<double>{0.1, 1, 10, 100, 1000})[static_cast<std::size_t>(
                                 best - sel.loglik.begin())]);
  EXPECT_GE(sel.best_lambda, 1.0);
  EXPECT_LE(sel.best_lambda, 100.0);
}

TEST(SelectLambda, TrueRatioBeatsHundredfold) {
  double sum_true = 0.0, sum_far = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DriftingLTVSpec spec;
    spec.seed = seed;
    const DriftingLTVData d = gen_drifting_ltv(spec);
    const double ratio = spec.sigma_v / spec.sigma_w;
    sum_true += ltv_loglik(d.traj, ratio, ParameterEvolution::random_walk());
    sum_far += ltv_loglik(d.traj, 100.0 * ratio, ParameterEvolution::random_walk());
  }
  EXPECT_GT(sum_true / 10, sum_far / 10);
}

// Sparse fits ---------------------------------------------------------------

double sparse_objective(const Trajectory& traj, const LTVModel& model, int order, bool group,
                        double lambda) {
  const Index k = traj.num_params();
  const VectorXd dk =
      oracle::ltv_dense_difference(traj.steps(), order == 1 ? std::vector<double>{-1, 1}
                                                : std::vector<double>{1, -2, 1},
                       k) *
      stacked(model);
  double pen = 0.0;
  if (group) {
    for (Index r = 0; r < dk.size() / k; ++r) pen += dk.segment(r * k, k).norm();
  } else {
    pen = dk.lpNorm<1>();
  }
  return ltv_prediction_sos(traj, model) + lambda * pen;
}

TEST(FitSparse, MatchesPatternEnumeration) {
  ADMMOptions tight;
  tight.tolerance = 1e-10;
  tight.max_iterations = 200000;
  struct Case { Index n, m, length; int order; bool group; double lambda; };
  const std::vector<Case> cases = {{1, 1, 8, 1, true, 0.5},  {1, 1, 8, 1, true, 2.0},
                                   {1, 2, 7, 1, true, 1.0},  {1, 1, 8, 2, true, 0.7},
                                   {1, 1, 6, 2, false, 0.4}, {1, 1, 6, 1, false, 0.8}};
  std::uint64_t seed = 100;
  for (const Case& c : cases) {
    const Trajectory traj = random_trajectory(c.n, c.m, c.length, ++seed);
    const Index k = traj.num_params();
    const MatrixXd d = oracle::ltv_dense_difference(
        traj.steps(), c.order == 1 ? std::vector<double>{-1, 1} : std::vector<double>{1, -2, 1}, k);
    const GroupPartition groups = contiguous_groups(d.rows(), c.group ? k : 1);
    // The oracle minimizes half the squared residual.
    const double want = 2.0 * oracle::group_lasso_enumeration(oracle::ltv_dense_regressor(traj),
                                                              oracle::ltv_dense_targets(traj), d, groups,
                                                              c.lambda / 2.0);
    const LTVModel got = fit_sparse(traj, c.lambda, c.order,
                                    c.group ? SparsePenalty::kGroup : SparsePenalty::kL1, tight);
    EXPECT_NEAR(sparse_objective(traj, got, c.order, c.group, c.lambda), want, 1e-5)
        << c.n << c.m << " order " << c.order << " lambda " << c.lambda;
  }
}

TEST(FitSparse, HugePenaltyGivesLtiFit) {
  const LTIModel sys = random_stable_linear(2, 0.5, 3, 1);
  RandomStream rng(3, 5);
  Trajectory clean = lti_rollout(sys, 60, 3);
  const Trajectory traj(clean.x() + 0.05 * rng.normal_matrix(60, 2), clean.u());
  const double scale = (oracle::ltv_dense_regressor(traj).transpose() * oracle::ltv_dense_targets(traj)).cwiseAbs().maxCoeff();
  ADMMOptions tight;
  tight.tolerance = 1e-10;
  tight.max_iterations = 100000;
  const LTVModel got = fit_sparse(traj, 1e6 * scale, 1, SparsePenalty::kGroup, tight);
  EXPECT_LT(parameter_changes(got, 1).maxCoeff(), 1e-6);
  const LTIModel lti = fit_lti(traj);
  for (Index t = 0; t < got.steps(); ++t) {
    EXPECT_LT((got.A[static_cast<std::size_t>(t)] - lti.A).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((got.B[static_cast<std::size_t>(t)] - lti.B).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(FitSparse, JumpIsLargestStep) {
  const JumpLinearData d = gen_jump_linear();
  const LTVModel got = fit_sparse(d.traj, 30.0);
  EXPECT_EQ(got.method, "group-order1");
  const Eigen::VectorXd a = parameter_changes(got, 1);
  Index arg = 0;
  a.maxCoeff(&arg);
  EXPECT_GE(arg, 195);
  EXPECT_LE(arg, 205);
  const std::vector<Index> knots = detect_knots(got, 1, KnotRule::top(1));
  ASSERT_EQ(knots.size(), 1u);
  EXPECT_EQ(knots[0], arg + 1);
}

TEST(FitSparse, SparsityMonotoneInLambda) {
  const JumpLinearData d = gen_jump_linear();
  auto active = [&](double lambda) {
    const Eigen::VectorXd a = parameter_changes(fit_sparse(d.traj, lambda), 1);
    return (a.array() > 1e-6).count();
  };
  const auto a3 = active(3.0), a30 = active(30.0), a300 = active(300.0);
  EXPECT_LE(a30, a3);
  EXPECT_LE(a300, a30);
  EXPECT_GE(a300, 0);
}

TEST(FitSparse, ReportsNonConvergence) {
  const JumpLinearData d = gen_jump_linear();
  ADMMOptions few;
  few.max_iterations = 3;
  try {
    fit_sparse(d.traj, 30.0, 1, SparsePenalty::kGroup, few);
    ADD_FAILURE() << "expected MaxIterations";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMaxIterations);
  }
  ADMMReport rep;
  const LTVModel got = fit_sparse(d.traj, 30.0, 1, SparsePenalty::kGroup, few, &rep);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(got.steps(), d.traj.steps());
  EXPECT_THROW(fit_sparse(d.traj, 0.0), Error);
  EXPECT_THROW(fit_sparse(d.traj, 1.0, 3), Error);
}

// Segmentation ----------------------------------------------------------------

TEST(SegmentsDp, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Trajectory traj = random_trajectory(1, 1, 14, 200 + seed);
    const Index steps = traj.steps(), len = 2;
    const double ridge = 1e-8;
    for (Index big_m = 0; big_m <= 2; ++big_m) {
      double best = std::numeric_limits<double>::infinity();
      std::vector<Index> arg;
      // Lexicographic enumeration keeps the earliest optimum.
      std::function<void(Index, std::vector<Index>&, double)> rec =
          [&](Index start, std::vector<Index>& bps, double acc) {
            if (static_cast<Index>(bps.size()) == big_m) {
              if (steps - start < len) return;
              const double c = acc + oracle::segment_cost(traj, start, steps - start, ridge);
              if (c < best) {
                best = c;
                arg = bps;
              }
              return;
            }
            for (Index e = start + len; e < steps; ++e) {
              bps.push_back(e);
              rec(e, bps, acc + oracle::segment_cost(traj, start, e - start, ridge));
              bps.pop_back();
            }
          };
      std::vector<Index> scratch;
      rec(0, scratch, 0.0);
      const SegmentedModel got = fit_segments_dp(traj, big_m);
      EXPECT_NEAR(got.total_cost, best, 1e-10 * std::max(1.0, best)) << seed << " M=" << big_m;
      EXPECT_EQ(got.breakpoints, arg) << seed << " M=" << big_m;
      ASSERT_EQ(got.segment_models.size(), static_cast<std::size_t>(big_m + 1));
      double sum = 0.0;
      for (double c : got.segment_costs) sum += c;
      EXPECT_NEAR(sum, got.total_cost, 1e-12 * std::max(1.0, sum));
    }
  }
}

TEST(SegmentsDp, SegmentCostMatchesOracle) {
  const Trajectory traj = random_trajectory(2, 1, 30, 210);
  for (double ridge : {0.0, 1e-8, 0.5})
    EXPECT_NEAR(segment_cost(traj, 4, 11, ridge), oracle::segment_cost(traj, 4, 11, ridge), 1e-10);
  EXPECT_THROW(segment_cost(traj, 25, 10, 0.0), Error);
}

TEST(SegmentsDp, FindsJump) {
  const JumpLinearData d = gen_jump_linear();
  const SegmentedModel got = fit_segments_dp(d.traj, 1);
  ASSERT_EQ(got.breakpoints.size(), 1u);
  EXPECT_GE(got.breakpoints[0], 198);
  EXPECT_LE(got.breakpoints[0], 202);
}

TEST(SegmentsDp, CostNonincreasingInM) {
  const LTIModel sys = random_stable_linear(2, 0.3, 9, 1);
  RandomStream rng(9, 7);
  const Trajectory clean = lti_rollout(sys, 80, 9);
  const Trajectory traj(clean.x() + 0.1 * rng.normal_matrix(80, 2), clean.u());
  double prev = std::numeric_limits<double>::infinity();
  const double unsegmented = fit_segments_dp(traj, 0).total_cost;
  for (Index big_m = 0; big_m <= 5; ++big_m) {
    const SegmentedModel got = fit_segments_dp(traj, big_m);
    EXPECT_LE(got.total_cost, prev) << big_m;
    EXPECT_LE(got.total_cost, unsegmented);
    EXPECT_TRUE(std::is_sorted(got.breakpoints.begin(), got.breakpoints.end()));
    prev = got.total_cost;
  }
}

TEST(SegmentsDp, Infeasible) {
  const Trajectory traj = random_trajectory(2, 1, 10, 211);  // 9 steps, min length 3
  EXPECT_NO_THROW(fit_segments_dp(traj, 2));
  try {
    fit_segments_dp(traj, 3);
    ADD_FAILURE() << "expected InfeasibleSegmentation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleSegmentation);
  }
  EXPECT_THROW(fit_segments_dp(traj, -1), Error);
}

TEST(SegmentsDp, ToLtvExpandsSegments) {
  const JumpLinearData d = gen_jump_linear();
  const SegmentedModel seg = fit_segments_dp(d.traj, 1);
  const LTVModel ltv = seg.to_ltv(d.traj.steps());
  ASSERT_EQ(ltv.steps(), d.traj.steps());
  const Index b = seg.breakpoints[0];
  EXPECT_EQ(ltv.A[static_cast<std::size_t>(b - 1)], seg.segment_models[0].A);
  EXPECT_EQ(ltv.A[static_cast<std::size_t>(b)], seg.segment_models[1].A);
}

// Knots and refinement --------------------------------------------------------

TEST(DetectKnots, ConstantModelHasNone) {
  const MatrixXd params = VectorXd::LinSpaced(6, 0.1, 0.6).transpose().replicate(30, 1);
  const LTVModel model = LTVModel::from_params(params, 2, 1);
  for (int order : {1, 2}) {
    EXPECT_TRUE(detect_knots(model, order, KnotRule::above(1e-12)).empty());
    EXPECT_TRUE(detect_knots(model, order, KnotRule::above(1.0)).empty());
  }
}

TEST(DetectKnots, RecoversPlantedJumps) {
  RandomStream rng(5, 9);
  MatrixXd params(40, 6);
  const VectorXd p0 = rng.normal_vector(6), p1 = rng.normal_vector(6), p2 = rng.normal_vector(6);
  for (Index t = 0; t < 40; ++t) params.row(t) = (t < 12 ? p0 : t < 27 ? p1 : p2).transpose();
  const LTVModel model = LTVModel::from_params(params, 2, 1);
  EXPECT_EQ(detect_knots(model, 1, KnotRule::top(2)), (std::vector<Index>{12, 27}));
  EXPECT_EQ(detect_knots(model, 1, KnotRule::above(1e-9)), (std::vector<Index>{12, 27}));
  EXPECT_EQ(detect_knots(model, 1, KnotRule::top(0)).size(), 0u);
  // A kink (slope change) shows up in the second difference only.
  MatrixXd ramp(20, 2);
  for (Index t = 0; t < 20; ++t) ramp.row(t) << (t < 9 ? 0.0 : 0.1 * (t - 9)), 1.0;
  const LTVModel kinked = LTVModel::from_params(ramp, 1, 1);
  EXPECT_EQ(detect_knots(kinked, 2, KnotRule::above(1e-9)), (std::vector<Index>{9}));
  EXPECT_THROW(detect_knots(kinked, 3, KnotRule::top(1)), Error);
}

TEST(RefineTwoStep, NoKnotsEqualsLtiFit) {
  const Trajectory traj = random_trajectory(2, 2, 40, 300);
  const SegmentedModel got = refine_two_step(traj, {});
  const LTIModel lti = fit_lti(traj);
  ASSERT_EQ(got.segment_models.size(), 1u);
  EXPECT_LT((got.segment_models[0].A - lti.A).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((got.segment_models[0].B - lti.B).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RefineTwoStep, TrueSwitchRecoversBothModels) {
  const JumpLinearData d = gen_jump_linear();
  const SegmentedModel got = refine_two_step(d.traj, {200});
  ASSERT_EQ(got.segment_models.size(), 2u);
  EXPECT_LT((got.segment_models[0].A - d.models[0].A).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((got.segment_models[1].A - d.models[1].A).cwiseAbs().maxCoeff(), 0.05);
}

TEST(RefineTwoStep, SegmentEstimatesUnbiasedOverSeeds) {
  MatrixXd mean1 = MatrixXd::Zero(2, 2), mean2 = MatrixXd::Zero(2, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    JumpLinearSpec spec;
    spec.seed = seed;
    const JumpLinearData d = gen_jump_linear(spec);
    const SegmentedModel got = refine_two_step(d.traj, {200});
    mean1 += got.segment_models[0].A / 10.0;
    mean2 += got.segment_models[1].A / 10.0;
    EXPECT_LT((got.segment_models[0].A - d.models[0].A).cwiseAbs().maxCoeff(), 0.05) << seed;
  }
  const JumpLinearData d = gen_jump_linear();
  EXPECT_LT((mean1 - d.models[0].A).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((mean2 - d.models[1].A).cwiseAbs().maxCoeff(), 0.05);
}

TEST(RefineTwoStep, AgreesWithDpSegments) {
  const Trajectory traj = random_trajectory(1, 1, 40, 301);
  SegmentOptions opts;
  opts.ridge_lambda = 1e-3;
  const SegmentedModel dp = fit_segments_dp(traj, 3, opts);
  const SegmentedModel two = refine_two_step(traj, dp.breakpoints, opts.ridge_lambda);
  ASSERT_EQ(dp.segment_models.size(), two.segment_models.size());
  for (std::size_t s = 0; s < dp.segment_models.size(); ++s) {
    EXPECT_LT((dp.segment_models[s].A - two.segment_models[s].A).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((dp.segment_models[s].B - two.segment_models[s].B).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_NEAR(two.total_cost, dp.total_cost, 1e-10 * dp.total_cost);
}

TEST(RefineTwoStep, RejectsBadKnots) {
  const Trajectory traj = random_trajectory(2, 1, 30, 302);
  EXPECT_THROW(refine_two_step(traj, {10, 10}), Error);
  EXPECT_THROW(refine_two_step(traj, {0}), Error);
  EXPECT_THROW(refine_two_step(traj, {29}), Error);
  EXPECT_THROW(refine_two_step(traj, {2}), Error);   // 2 < n + m steps
  EXPECT_NO_THROW(refine_two_step(traj, {2}, 1e-6));
}

TEST(Identifiability, Cases) {
  const Trajectory rich = random_trajectory(3, 2, 50, 400);
  for (int order : {1, 2}) {
    const Identifiability id = check_identifiability(rich, order);
    EXPECT_TRUE(id.well_posed);
    EXPECT_GT(id.min_singular_value, 0.1);
  }

  MatrixXd x = MatrixXd::Zero(30, 2);
  x.row(0) << 1.0, -2.0;
  EXPECT_FALSE(check_identifiability(Trajectory(x, MatrixXd::Zero(30, 1))).well_posed);

  // Every regressor row on one line of R^{n+m}.
  RandomStream rng(400, 3);
  const VectorXd dir = rng.normal_vector(3);
  const VectorXd amp = rng.normal_vector(30);
  const MatrixXd rows = amp * dir.transpose();
  const Identifiability flat =
      check_identifiability(Trajectory(rows.leftCols(2), rows.rightCols(1)));
  EXPECT_FALSE(flat.well_posed);
  EXPECT_LT(flat.min_singular_value, 1e-8);
  EXPECT_THROW(check_identifiability(rich, 0), Error);
}

}  // namespace
}  // namespace sysid
