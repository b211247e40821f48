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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "sysid/error.hpp"

namespace sysid {

Eigen::MatrixXd LTVModel::params() const {
  if (A.empty()) return Eigen::MatrixXd();
  const Eigen::Index k = n() * (n() + m());
  Eigen::MatrixXd out(steps(), k);
  for (Eigen::Index t = 0; t < steps(); ++t)
    out.row(t) = params_from_matrices(A[t], B[t]).transpose();
  return out;
}

LTVModel LTVModel::from_params(const Eigen::MatrixXd& params, Eigen::Index n, Eigen::Index m) {
  if (params.cols() != n * (n + m))
    throw Error(ErrorCode::kDimensionMismatch, "parameter rows do not match n and m");
  LTVModel model;
  model.A.reserve(static_cast<std::size_t>(params.rows()));
  model.B.reserve(static_cast<std::size_t>(params.rows()));
  for (Eigen::Index t = 0; t < params.rows(); ++t) {
    LTIModel step = matrices_from_params(params.row(t).transpose(), n, m);
    model.A.push_back(std::move(step.A));
    model.B.push_back(std::move(step.B));
  }
  return model;
}

double ltv_prediction_sos(const Trajectory& traj, const LTVModel& model) {
  if (model.steps() != traj.steps() || model.n() != traj.n() || model.m() != traj.m())
    throw Error(ErrorCode::kDimensionMismatch, "model does not match the trajectory");
  double sos = 0.0;
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    Eigen::VectorXd r = traj.x().row(t + 1).transpose() - model.A[t] * traj.x().row(t).transpose();
    if (traj.m() > 0) r -= model.B[t] * traj.u().row(t).transpose();
    sos += r.squaredNorm();
  }
  return sos;
}

// Parameter evolution -------------------------------------------------------

ParameterEvolution ParameterEvolution::random_walk() { return ParameterEvolution({-1.0}); }

ParameterEvolution ParameterEvolution::second_order() { return ParameterEvolution({1.0, -2.0}); }

ParameterEvolution ParameterEvolution::polynomial(std::vector<double> c) {
  if (c.empty()) throw Error(ErrorCode::kInvalidArgument, "polynomial degree must be at least 1");
  if (c.front() == 0.0)
    throw Error(ErrorCode::kInvalidArgument,
                "constant coefficient must be nonzero (factor out the shift instead)");
  for (double v : c)
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite coefficient");
  return ParameterEvolution(std::move(c));
}

std::vector<double> ParameterEvolution::full_polynomial() const {
  std::vector<double> p = coeffs_;
  p.push_back(1.0);
  return p;
}

namespace {

// Kalman model of the shift-register state s_t = [k_t; k_{t+1}; ...;
// k_{t+d-1}] driven by w_t in its last block.
LinearGaussianModel parameter_state_model(const Trajectory& traj, double lambda,
                                          const ParameterEvolution& evolution,
                                          const std::optional<Eigen::MatrixXd>& weight,
                                          double initial_variance) {
  const Eigen::Index k = traj.num_params();
  const Eigen::Index d = evolution.degree();
  const Eigen::Index dim = d * k;
  const Eigen::Index steps = traj.steps();

  LinearGaussianModel model;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index b = 0; b + 1 < d; ++b) f.block(b * k, (b + 1) * k, k, k).setIdentity();
  for (Eigen::Index b = 0; b < d; ++b)
    f.block((d - 1) * k, b * k, k, k).diagonal().setConstant(-evolution.coefficients()[b]);
  model.A = {f};

  Eigen::MatrixXd drive;
  if (weight) {
    if (weight->rows() != k || weight->cols() != k)
      throw Error(ErrorCode::kDimensionMismatch, "step weight must be K x K");
    Eigen::LLT<Eigen::MatrixXd> llt(*weight);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::kNotPositiveDefinite, "step weight must be positive definite");
    drive = llt.solve(Eigen::MatrixXd::Identity(k, k)) / (lambda * lambda);
  } else {
    drive = Eigen::MatrixXd::Identity(k, k) / (lambda * lambda);
  }
  model.R1 = Eigen::MatrixXd::Zero(dim, dim);
  model.R1.bottomRightCorner(k, k) = symmetrize(drive);

  model.C.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(traj.n(), dim);
    c.leftCols(k) = traj.observation_matrix(t);
    model.C.push_back(std::move(c));
  }
  model.R2 = Eigen::MatrixXd::Identity(traj.n(), traj.n());

  // Start from the LTI estimate; a tiny ridge keeps this defined even when
  // the caller has already accepted marginal data.
  const LTIModel lti = fit_lti(traj, 1e-10);
  const Eigen::VectorXd k0 = params_from_matrices(lti.A, lti.B);
  model.x0 = k0.replicate(d, 1);
  model.P0 = initial_variance * Eigen::MatrixXd::Identity(dim, dim);
  return model;
}

Eigen::MatrixXd step_targets(const Trajectory& traj) {
  return traj.x().bottomRows(traj.steps());
}

void require_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::kIllPosed, "lambda must be positive and finite");
}

}  // namespace

LTVModel fit_l2(const Trajectory& traj, double lambda, const ParameterEvolution& evolution,
                const FitL2Options& options) {
  require_lambda(lambda);
  if (!(options.initial_variance > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "initial variance must be positive");
  const Identifiability id = check_identifiability(traj, static_cast<int>(evolution.degree()));
  if (!id.well_posed)
    throw Error(ErrorCode::kIllPosed,
                "regressors are rank deficient (min singular value " +
                    std::to_string(id.min_singular_value) + ")");

  LinearGaussianModel model = parameter_state_model(traj, lambda, evolution, options.step_weight,
                                                    options.initial_variance);
  const Eigen::Index k = traj.num_params();
  const Eigen::Index dim = model.state_dim();

  PriorFunction prior;
  if (options.prior) {
    Eigen::MatrixXd select = Eigen::MatrixXd::Zero(k, dim);
    select.leftCols(k).setIdentity();
    prior = [&options, select](Eigen::Index t) -> std::optional<GaussianPrior> {
      std::optional<GaussianPrior> p = options.prior(t);
      if (p) p->map = select;
      return p;
    };
  }

  const Eigen::MatrixXd y = step_targets(traj);
  GaussianStateSequence seq;
  // The smoothed s_0 is affine in x0 with slope G = Sigma_0 P0^-1, Sigma_0 its
  // smoothed covariance; solve for the fixed point s_0 = x0 directly.
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
  for (int pass = 0;; ++pass) {
    seq = rts_smooth(kalman_filter(model, y, Eigen::MatrixXd(), prior), model);
    const Eigen::VectorXd& s0 = seq.smoothed_means.front();
    const double change = (s0 - model.x0).norm();
    if (pass >= options.max_recentre_passes || change <= 1e-13 * (1.0 + s0.norm())) break;
    const Eigen::MatrixXd g = seq.smoothed_covs.front() / options.initial_variance;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(eye - g);
    if (lu.rcond() > 1e-12)
      model.x0 = lu.solve(s0 - g * model.x0);
    else
      model.x0 = s0;
  }

  Eigen::MatrixXd params(traj.steps(), k);
  for (Eigen::Index t = 0; t < traj.steps(); ++t)
    params.row(t) = seq.smoothed_means[t].head(k).transpose();
  LTVModel out = LTVModel::from_params(params, traj.n(), traj.m());
  if (options.compute_covariances) {
    std::vector<Eigen::MatrixXd> covs;
    covs.reserve(static_cast<std::size_t>(traj.steps()));
    for (const auto& p : seq.smoothed_covs) covs.push_back(p.topLeftCorner(k, k));
    out.param_covs = std::move(covs);
  }
  out.method = evolution.degree() == 1 ? "l2-order1" : "l2-order" + std::to_string(evolution.degree());
  out.lambda = lambda;
  return out;
}

double ltv_loglik(const Trajectory& traj, double lambda, const ParameterEvolution& evolution,
                  double initial_variance) {
  require_lambda(lambda);
  const LinearGaussianModel model =
      parameter_state_model(traj, lambda, evolution, std::nullopt, initial_variance);
  const Eigen::MatrixXd y = step_targets(traj);
  const GaussianStateSequence seq = kalman_filter(model, y, Eigen::MatrixXd());
  // With R1, R2 and P0 all scaled by s^2, the innovation covariances scale by
  // s^2 as well; split the unit-scale likelihood into its two sums.
  double quad = 0.0, logdet = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    const Eigen::MatrixXd& c = model.C_at(t);
    const Eigen::MatrixXd s =
        symmetrize(c * seq.predicted_covs[t] * c.transpose() + model.R2);
    llt.compute(s);
    const Eigen::VectorXd e = y.row(t).transpose() - c * seq.predicted_means[t];
    quad += llt.matrixL().solve(e).squaredNorm();
    logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
  const double count = static_cast<double>(y.size());
  const double s2 = quad / count;
  return -0.5 * (count * std::log(2.0 * std::numbers::pi * s2) + logdet + count);
}

LambdaSelection select_lambda_ml(const Trajectory& traj, const std::vector<double>& grid,
                                 const ParameterEvolution& evolution) {
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "lambda grid is empty");
  LambdaSelection sel;
  double best = -std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    const double ll = ltv_loglik(traj, lambda, evolution);
    sel.loglik.push_back(ll);
    if (ll > best || sel.loglik.size() == 1) {
      best = ll;
      sel.best_lambda = lambda;
    }
  }
  return sel;
}

// Sparse fits -----------------------------------------------------------------

LTVModel fit_sparse(const Trajectory& traj, double lambda, int order, SparsePenalty penalty,
                    const ADMMOptions& admm, ADMMReport* report) {
  require_lambda(lambda);
  if (order != 1 && order != 2)
    throw Error(ErrorCode::kInvalidArgument, "order must be 1 or 2");
  const Eigen::Index n = traj.n(), p = traj.n() + traj.m(), k = traj.num_params();
  const Eigen::Index steps = traj.steps();
  if (steps <= order) throw Error(ErrorCode::kInvalidArgument, "too few steps for this order");

  ProxProblem prob;
  prob.regressors.resize(steps * n, steps * k);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(steps * n * p));
  const Eigen::MatrixXd z = traj.regressors(0, steps);
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        trips.emplace_back(t * n + i, t * k + i * p + j, z(t, j));
  prob.regressors.setFromTriplets(trips.begin(), trips.end());
  const Eigen::MatrixXd y = step_targets(traj);
  prob.targets.resize(steps * n);
  for (Eigen::Index t = 0; t < steps; ++t) prob.targets.segment(t * n, n) = y.row(t).transpose();
  prob.linear_op = difference_operator(steps, order, k);
  // ADMM minimizes half the squared residual.
  prob.lambda = lambda / 2.0;
  if (penalty == SparsePenalty::kGroup) {
    prob.penalty = Penalty::kGroupL2;
    prob.groups = contiguous_groups(prob.linear_op.rows(), k);
  } else {
    prob.penalty = Penalty::kL1;
  }

  ADMMOptions opts = admm;
  if (opts.initial.size() == 0) {
    const LTIModel lti = fit_lti(traj, 1e-10);
    opts.initial = params_from_matrices(lti.A, lti.B).replicate(steps, 1);
  }
  ADMMReport rep = linearized_admm(prob, opts);
  if (!rep.converged && !report)
    throw Error(ErrorCode::kMaxIterations,
                "ADMM did not converge in " + std::to_string(rep.iterations) + " iterations");
  const Eigen::Map<const Eigen::MatrixXd> kt(rep.solution.data(), k, steps);
  LTVModel out = LTVModel::from_params(kt.transpose(), traj.n(), traj.m());
  out.method = std::string(penalty == SparsePenalty::kGroup ? "group" : "l1") + "-order" +
               std::to_string(order);
  out.lambda = lambda;
  if (report) *report = std::move(rep);
  return out;
}

// Segmentation ----------------------------------------------------------------

namespace {

// Running normal equations of one segment, rows added in time order.
class SegmentAccumulator {
 public:
  SegmentAccumulator(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, Eigen::Index first)
      : z_(z), y_(y), first_(first),
        gram_(Eigen::MatrixXd::Zero(z.cols(), z.cols())),
        cross_(Eigen::MatrixXd::Zero(z.cols(), y.cols())) {}

  void add_next() {
    const Eigen::Index t = first_ + count_;
    gram_.noalias() += z_.row(t).transpose() * z_.row(t);
    cross_.noalias() += z_.row(t).transpose() * y_.row(t);
    ++count_;
  }

  // Residual sum of squares plus ridge * ||W||^2 at the minimizer W.
  double cost(double ridge) const {
    Eigen::MatrixXd w;
    if (ridge > 0.0) {
      const Eigen::MatrixXd g =
          gram_ + ridge * Eigen::MatrixXd::Identity(gram_.rows(), gram_.cols());
      w = g.llt().solve(cross_);
    } else {
      w = gram_.completeOrthogonalDecomposition().solve(cross_);
    }
    const Eigen::MatrixXd r =
        y_.middleRows(first_, count_) - z_.middleRows(first_, count_) * w;
    return r.squaredNorm() + ridge * w.squaredNorm();
  }

 private:
  const Eigen::MatrixXd& z_;
  const Eigen::MatrixXd& y_;
  Eigen::Index first_;
  Eigen::Index count_ = 0;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd cross_;
};

Eigen::Index resolve_min_length(const Trajectory& traj, const SegmentOptions& options) {
  if (options.min_length < 0) throw Error(ErrorCode::kInvalidArgument, "negative min_length");
  return options.min_length > 0 ? options.min_length : traj.n() + traj.m();
}

void fill_segments(const Trajectory& traj, double ridge, SegmentedModel* out) {
  std::vector<Eigen::Index> edges = {0};
  edges.insert(edges.end(), out->breakpoints.begin(), out->breakpoints.end());
  edges.push_back(traj.steps());
  out->segment_models.clear();
  for (std::size_t s = 0; s + 1 < edges.size(); ++s)
    out->segment_models.push_back(
        fit_lti_steps(traj, edges[s], edges[s + 1] - edges[s], ridge).model);
}

}  // namespace

double segment_cost(const Trajectory& traj, Eigen::Index first, Eigen::Index count,
                    double ridge_lambda) {
  if (first < 0 || count < 1 || first + count > traj.steps())
    throw Error(ErrorCode::kInvalidArgument, "segment outside the trajectory");
  const Eigen::MatrixXd z = traj.regressors(0, traj.steps());
  const Eigen::MatrixXd y = step_targets(traj);
  SegmentAccumulator acc(z, y, first);
  for (Eigen::Index i = 0; i < count; ++i) acc.add_next();
  return acc.cost(ridge_lambda);
}

SegmentedModel fit_segments_dp(const Trajectory& traj, Eigen::Index M,
                               const SegmentOptions& options) {
  if (M < 0) throw Error(ErrorCode::kInvalidArgument, "number of breakpoints must be >= 0");
  if (options.ridge_lambda < 0.0)
    throw Error(ErrorCode::kInvalidArgument, "ridge_lambda must be nonnegative");
  const Eigen::Index steps = traj.steps();
  const Eigen::Index len = resolve_min_length(traj, options);
  if (steps < (M + 1) * len)
    throw Error(ErrorCode::kInfeasibleSegmentation,
                std::to_string(steps) + " steps cannot hold " + std::to_string(M + 1) +
                    " segments of at least " + std::to_string(len) + " steps");

  const Eigen::MatrixXd z = traj.regressors(0, steps);
  const Eigen::MatrixXd y = step_targets(traj);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // cost(a, b) for the segment [a, b).
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(steps + 1, steps + 1, kInf);
  for (Eigen::Index a = 0; a < steps; ++a) {
    SegmentAccumulator acc(z, y, a);
    for (Eigen::Index b = a + 1; b <= steps; ++b) {
      acc.add_next();
      if (b - a >= len) cost(a, b) = acc.cost(options.ridge_lambda);
    }
  }

  // value(j, s): best cost of covering [s, steps) with j more breakpoints.
  Eigen::MatrixXd value = Eigen::MatrixXd::Constant(M + 1, steps + 1, kInf);
  Eigen::MatrixXi next = Eigen::MatrixXi::Constant(M + 1, steps + 1, -1);
  for (Eigen::Index s = 0; s < steps; ++s) value(0, s) = cost(s, steps);
  for (Eigen::Index j = 1; j <= M; ++j) {
    for (Eigen::Index s = 0; s < steps; ++s) {
      double best = kInf;
      Eigen::Index arg = -1;
      for (Eigen::Index e = s + len; e + j * len <= steps; ++e) {
        const double c = cost(s, e) + value(j - 1, e);
        if (c < best) {
          best = c;
          arg = e;
        }
      }
      value(j, s) = best;
      next(j, s) = static_cast<int>(arg);
    }
  }

  SegmentedModel out;
  out.total_cost = value(M, 0);
  Eigen::Index s = 0;
  for (Eigen::Index j = M; j >= 1; --j) {
    const Eigen::Index e = next(j, s);
    out.breakpoints.push_back(e);
    out.segment_costs.push_back(cost(s, e));
    s = e;
  }
  out.segment_costs.push_back(cost(s, steps));
  fill_segments(traj, options.ridge_lambda, &out);
  return out;
}

LTVModel SegmentedModel::to_ltv(Eigen::Index steps) const {
  LTVModel out;
  std::size_t seg = 0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    while (seg < breakpoints.size() && t >= breakpoints[seg]) ++seg;
    out.A.push_back(segment_models.at(seg).A);
    out.B.push_back(segment_models.at(seg).B);
  }
  out.method = "segments";
  return out;
}

Eigen::VectorXd parameter_changes(const LTVModel& model, int order) {
  if (order != 1 && order != 2) throw Error(ErrorCode::kInvalidArgument, "order must be 1 or 2");
  const Eigen::MatrixXd p = model.params();
  const Eigen::Index count = p.rows() - order;
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "model has too few steps");
  Eigen::VectorXd a(count);
  for (Eigen::Index t = 0; t < count; ++t) {
    if (order == 1)
      a(t) = (p.row(t + 1) - p.row(t)).norm();
    else
      a(t) = (p.row(t + 2) - 2.0 * p.row(t + 1) + p.row(t)).norm();
  }
  return a;
}

std::vector<Eigen::Index> detect_knots(const LTVModel& model, int order, KnotRule rule) {
  const Eigen::VectorXd a = parameter_changes(model, order);
  std::vector<Eigen::Index> picked;
  if (rule.count >= 0) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(a.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i) > a(j); });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(rule.count)));
    picked = idx;
  } else {
    for (Eigen::Index t = 0; t < a.size(); ++t)
      if (a(t) > rule.threshold) picked.push_back(t);
  }
  for (auto& t : picked) t += 1;
  std::sort(picked.begin(), picked.end());
  return picked;
}

SegmentedModel refine_two_step(const Trajectory& traj, const std::vector<Eigen::Index>& knots,
                               double ridge_lambda) {
  const Eigen::Index steps = traj.steps();
  const Eigen::Index len = ridge_lambda > 0.0 ? 1 : traj.n() + traj.m();
  Eigen::Index prev = 0;
  for (Eigen::Index k : knots) {
    if (k <= prev || k >= steps)
      throw Error(ErrorCode::kInfeasibleSegmentation, "knots must increase strictly inside (0, T)");
    prev = k;
  }
  SegmentedModel out;
  out.breakpoints = knots;
  std::vector<Eigen::Index> edges = {0};
  edges.insert(edges.end(), knots.begin(), knots.end());
  edges.push_back(steps);
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    const Eigen::Index count = edges[s + 1] - edges[s];
    if (count < len)
      throw Error(ErrorCode::kInfeasibleSegmentation,
                  "segment starting at " + std::to_string(edges[s]) + " is too short");
    const LTIFit fit = fit_lti_steps(traj, edges[s], count, ridge_lambda);
    out.segment_models.push_back(fit.model);
    out.segment_costs.push_back(fit.objective);
    out.total_cost += fit.objective;
  }
  return out;
}

Identifiability check_identifiability(const Trajectory& traj, int order) {
  if (order < 1) throw Error(ErrorCode::kInvalidArgument, "order must be at least 1");
  const Eigen::MatrixXd z = traj.regressors(0, traj.steps());
  Identifiability id;
  const Eigen::VectorXd s = z.bdcSvd().singularValues();
  id.max_singular_value = s.size() > 0 ? s(0) : 0.0;
  // Fewer rows than columns leaves a null space.
  id.min_singular_value = z.rows() < z.cols() ? 0.0 : s(s.size() - 1);
  id.well_posed = id.max_singular_value > 0.0 &&
                  id.min_singular_value > 1e-8 * id.max_singular_value;
  return id;
}

}  // namespace sysid
