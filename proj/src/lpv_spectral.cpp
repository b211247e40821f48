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

#include "sysid/lpv_spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sysid/error.hpp"
#include "sysid/least_squares.hpp"
#include "sysid/random.hpp"

namespace sysid {

using Eigen::Index;

void BasisFunctionExpansion::validate() const {
  if (centers.size() < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one basis function");
  if (widths.size() != centers.size())
    throw Error(ErrorCode::kDimensionMismatch, "centers and widths differ in length");
  if (!centers.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite center");
  if (!(widths.array() > 0.0).all() || !widths.allFinite())
    throw Error(ErrorCode::kInvalidArgument, "widths must be positive");
}

BasisFunctionExpansion BasisFunctionExpansion::uniform(double lo, double hi, Index count,
                                                       bool normalized) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one basis function");
  if (!(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw Error(ErrorCode::kInvalidArgument, "invalid range");
  BasisFunctionExpansion bfe;
  bfe.normalized = normalized;
  if (count == 1) {
    bfe.centers = Eigen::VectorXd::Constant(1, 0.5 * (lo + hi));
    bfe.widths = Eigen::VectorXd::Constant(1, hi > lo ? hi - lo : 1.0);
  } else {
    bfe.centers = Eigen::VectorXd::LinSpaced(count, lo, hi);
    const double spacing = (hi - lo) / static_cast<double>(count - 1);
    bfe.widths = Eigen::VectorXd::Constant(count, spacing > 0.0 ? spacing : 1.0);
  }
  return bfe;
}

Eigen::VectorXd bfe_activations(const BasisFunctionExpansion& bfe, double v) {
  const Eigen::ArrayXd d = (v - bfe.centers.array()) / bfe.widths.array();
  Eigen::VectorXd a = (-0.5 * d.square()).exp().matrix();
  if (!bfe.normalized) return a;
  const double sum = a.sum();
  if (sum < 1e-300) {
    Index nearest = 0;
    (bfe.centers.array() - v).abs().minCoeff(&nearest);
    a.setZero();
    a(nearest) = 1.0;
    return a;
  }
  return a / sum;
}

void ScheduledSignal::validate() const {
  if (x.size() != y.size() || v.size() != y.size())
    throw Error(ErrorCode::kDimensionMismatch, "x, v and y must have equal length");
  if (!x.allFinite() || !v.allFinite() || !y.allFinite())
    throw Error(ErrorCode::kInvalidArgument, "signal contains non-finite values");
}

Eigen::MatrixXd build_regressor(const ScheduledSignal& signal, const Eigen::VectorXd& omega,
                                const BasisFunctionExpansion& bfe) {
  signal.validate();
  bfe.validate();
  const Index n = signal.size(), o_count = omega.size(), j_count = bfe.size();
  const Index half = o_count * j_count;
  Eigen::MatrixXd a(n, 2 * half);
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = bfe_activations(bfe, signal.v(i));
    for (Index o = 0; o < o_count; ++o) {
      const double arg = omega(o) * signal.x(i);
      const double c = std::cos(arg), s = std::sin(arg);
      a.row(i).segment(o * j_count, j_count) = c * phi.transpose();
      a.row(i).segment(half + o * j_count, j_count) = -s * phi.transpose();
    }
  }
  return a;
}

std::string SpectralRegularizer::tag() const {
  switch (kind) {
    case Kind::kNone:
      return "none";
    case Kind::kRidge:
      return "ridge";
    case Kind::kL1:
      return "l1";
    case Kind::kGroupL2:
      return "group_l2";
  }
  return "none";
}

Eigen::VectorXd SpectralEstimate::stacked() const {
  const Index o_count = coeffs.rows(), j_count = coeffs.cols(), half = o_count * j_count;
  Eigen::VectorXd k(2 * half);
  for (Index o = 0; o < o_count; ++o)
    for (Index j = 0; j < j_count; ++j) {
      k(o * j_count + j) = coeffs(o, j).real();
      k(half + o * j_count + j) = coeffs(o, j).imag();
    }
  return k;
}

Eigen::MatrixXcd coeffs_from_stacked(const Eigen::VectorXd& k, Index num_frequencies,
                                     Index num_basis) {
  const Index half = num_frequencies * num_basis;
  if (k.size() != 2 * half) throw Error(ErrorCode::kDimensionMismatch, "coefficient length");
  Eigen::MatrixXcd c(num_frequencies, num_basis);
  for (Index o = 0; o < num_frequencies; ++o)
    for (Index j = 0; j < num_basis; ++j)
      c(o, j) = {k(o * num_basis + j), k(half + o * num_basis + j)};
  return c;
}

SpectralEstimate fit_spectrum(const ScheduledSignal& signal, const Eigen::VectorXd& omega,
                              const BasisFunctionExpansion& bfe,
                              const SpectralRegularizer& regularizer, const ADMMOptions& admm) {
  if (omega.size() < 1) throw Error(ErrorCode::kInvalidArgument, "no frequencies given");
  if (!omega.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite frequency");
  using Kind = SpectralRegularizer::Kind;
  if (regularizer.kind != Kind::kNone && !(regularizer.lambda >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "regularization weight must be nonnegative");

  const Eigen::MatrixXd a = build_regressor(signal, omega, bfe);
  const Index o_count = omega.size(), j_count = bfe.size(), dim = a.cols();
  const double dof = std::max<double>(static_cast<double>(signal.size() - dim), 1.0);

  SpectralEstimate est;
  est.omega = omega;
  est.bfe = bfe;
  est.regularizer = regularizer.tag();
  Eigen::VectorXd k;
  if (regularizer.kind == Kind::kNone || regularizer.kind == Kind::kRidge) {
    LSOptions opts;
    opts.compute_covariance = true;
    const LSSolution sol = regularizer.kind == Kind::kNone
                               ? solve_ls(a, signal.y, opts)
                               : solve_ridge(a, signal.y, regularizer.lambda, opts);
    k = sol.coefficients;
    est.covariance = sol.param_covariance;
  } else {
    ProxProblem prob;
    prob.regressors = a.sparseView();
    prob.targets = signal.y;
    prob.linear_op = sparse_identity(dim);
    // ADMM minimizes half the squared residual.
    prob.lambda = regularizer.lambda / 2.0;
    if (regularizer.kind == Kind::kL1) {
      prob.penalty = Penalty::kL1;
    } else {
      prob.penalty = Penalty::kGroupL2;
      for (Index o = 0; o < o_count; ++o) {
        std::vector<Index> g;
        for (Index j = 0; j < j_count; ++j) g.push_back(o * j_count + j);
        for (Index j = 0; j < j_count; ++j) g.push_back(o_count * j_count + o * j_count + j);
        prob.groups.push_back(std::move(g));
      }
    }
    const ADMMReport rep = linearized_admm(prob, admm);
    if (!rep.converged)
      throw Error(ErrorCode::kMaxIterations,
                  "ADMM did not converge in " + std::to_string(rep.iterations) + " iterations");
    // The split variable is exactly sparse; it equals the solution up to the
    // stopping tolerance.
    k = rep.split;
  }
  est.sigma2 = (signal.y - a * k).squaredNorm() / dof;
  est.coeffs = coeffs_from_stacked(k, o_count, j_count);
  return est;
}

RidgeSelection select_ridge_gcv(const ScheduledSignal& signal, const Eigen::VectorXd& omega,
                                const BasisFunctionExpansion& bfe,
                                const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "lambda grid is empty");
  for (double l : grid)
    if (!(l >= 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::kInvalidArgument, "ridge weights must be nonnegative");
  const Eigen::MatrixXd a = build_regressor(signal, omega, bfe);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  const Eigen::ArrayXd s2 = svd.singularValues().array().square();
  const Eigen::ArrayXd uy = (svd.matrixU().transpose() * signal.y).array();
  // Part of y outside the range of A, untouched by any lambda.
  const double outside = std::max(signal.y.squaredNorm() - uy.square().sum(), 0.0);
  const double n = static_cast<double>(signal.size());
  RidgeSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (double l : grid) {
    const Eigen::ArrayXd f = (s2 > 0.0).select(s2 / (s2 + l), 0.0);
    const double rss = outside + ((1.0 - f) * uy).square().sum();
    const double denom = n - f.sum();
    const double score = denom > 0.0 ? n * rss / (denom * denom)
                                     : std::numeric_limits<double>::infinity();
    sel.scores.push_back(score);
    if (score < best || sel.scores.size() == 1) {
      best = score;
      sel.best_lambda = l;
    }
  }
  return sel;
}

std::complex<double> spectral_value(const SpectralEstimate& est, Index o, double v) {
  if (o < 0 || o >= est.num_frequencies())
    throw Error(ErrorCode::kInvalidArgument, "frequency index out of range");
  const Eigen::VectorXcd phi = bfe_activations(est.bfe, v).cast<std::complex<double>>();
  return est.coeffs.row(o) * phi;
}

double amplitude(const SpectralEstimate& est, Index o, double v) {
  return std::abs(spectral_value(est, o, v));
}

double phase(const SpectralEstimate& est, Index o, double v) {
  const std::complex<double> z = spectral_value(est, o, v);
  if (std::abs(z) < 1e-12) throw Error(ErrorCode::kPhaseUndefined, "amplitude is zero");
  return std::arg(z);
}

Eigen::VectorXd power_spectrum(const SpectralEstimate& est) {
  return est.coeffs.rowwise().sum().cwiseAbs2();
}

ComplexNormalMoments complex_moments_from_real(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() % 2 != 0)
    throw Error(ErrorCode::kDimensionMismatch, "covariance must be square of even size");
  const Index d = sigma.rows() / 2;
  const Eigen::MatrixXd rr = sigma.topLeftCorner(d, d), ri = sigma.topRightCorner(d, d);
  const Eigen::MatrixXd ir = sigma.bottomLeftCorner(d, d), ii = sigma.bottomRightCorner(d, d);
  const std::complex<double> i(0.0, 1.0);
  ComplexNormalMoments out;
  out.gamma = (rr + ii).cast<std::complex<double>>() + i * (ir - ri).cast<std::complex<double>>();
  out.relation = (rr - ii).cast<std::complex<double>>() + i * (ir + ri).cast<std::complex<double>>();
  return out;
}

Eigen::MatrixXd real_covariance_from_complex(const Eigen::MatrixXcd& gamma,
                                             const Eigen::MatrixXcd& relation) {
  if (gamma.rows() != gamma.cols() || relation.rows() != gamma.rows() ||
      relation.cols() != gamma.cols())
    throw Error(ErrorCode::kDimensionMismatch, "Gamma and C must be square and equal in size");
  const Index d = gamma.rows();
  Eigen::MatrixXd s(2 * d, 2 * d);
  s.topLeftCorner(d, d) = 0.5 * (gamma + relation).real();
  s.topRightCorner(d, d) = 0.5 * (relation - gamma).imag();
  s.bottomLeftCorner(d, d) = 0.5 * (gamma + relation).imag();
  s.bottomRightCorner(d, d) = 0.5 * (gamma - relation).real();
  return s;
}

Eigen::MatrixXcd sample_complex_normal(const Eigen::VectorXcd& mean, const Eigen::MatrixXd& sigma,
                                       Index n, std::uint64_t seed) {
  const Index d = mean.size();
  if (sigma.rows() != 2 * d || sigma.cols() != 2 * d)
    throw Error(ErrorCode::kDimensionMismatch, "covariance must be 2D x 2D");
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "negative sample count");
  const Eigen::MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  const double trace = sym.trace();
  if (trace < 0.0 || !std::isfinite(trace))
    throw Error(ErrorCode::kNotPositiveDefinite, "covariance has negative trace");
  if (trace > 0.0) {
    Eigen::MatrixXd jittered = sym;
    jittered.diagonal().array() += 1e-12 * trace / static_cast<double>(2 * d);
    const Eigen::LLT<Eigen::MatrixXd> llt(jittered);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::kNotPositiveDefinite, "covariance is not positive semidefinite");
    l = llt.matrixL();
  }
  Eigen::MatrixXcd out(d, n);
  for (Index s = 0; s < n; ++s) {
    RandomStream rng(seed, static_cast<std::uint64_t>(s));
    const Eigen::VectorXd z = l * rng.normal_vector(2 * d);
    for (Index i = 0; i < d; ++i) out(i, s) = mean(i) + std::complex<double>(z(i), z(d + i));
  }
  return out;
}

std::vector<Eigen::MatrixXcd> sample_coefficients(const SpectralEstimate& est, Index n,
                                                  std::uint64_t seed) {
  if (!est.covariance)
    throw Error(ErrorCode::kInvalidArgument, "estimate has no parameter covariance");
  const Index o_count = est.coeffs.rows(), j_count = est.coeffs.cols();
  // Complex vector in column order: entry o * J + j.
  Eigen::VectorXcd mean(o_count * j_count);
  for (Index o = 0; o < o_count; ++o)
    for (Index j = 0; j < j_count; ++j) mean(o * j_count + j) = est.coeffs(o, j);
  const Eigen::MatrixXcd draws = sample_complex_normal(mean, *est.covariance, n, seed);
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    Eigen::MatrixXcd c(o_count, j_count);
    for (Index o = 0; o < o_count; ++o)
      for (Index j = 0; j < j_count; ++j) c(o, j) = draws(o * j_count + j, s);
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double wrap_to_pi(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

}  // namespace

ConfidenceBands confidence_bands(const SpectralEstimate& est, Index o,
                                 const Eigen::VectorXd& v_grid, double level, Index n_mc,
                                 std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "level must lie in (0, 1)");
  if (n_mc < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one Monte Carlo draw");
  if (o < 0 || o >= est.num_frequencies())
    throw Error(ErrorCode::kInvalidArgument, "frequency index out of range");
  const std::vector<Eigen::MatrixXcd> draws = sample_coefficients(est, n_mc, seed);
  const double p_lo = 0.5 * (1.0 - level), p_hi = 1.0 - p_lo;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  const Index g = v_grid.size();
  ConfidenceBands out;
  out.amplitude.resize(g);
  out.amplitude_lo.resize(g);
  out.amplitude_hi.resize(g);
  out.phase.resize(g);
  out.phase_lo.resize(g);
  out.phase_hi.resize(g);
  std::vector<double> amps(static_cast<std::size_t>(n_mc)), phases(static_cast<std::size_t>(n_mc));
  for (Index i = 0; i < g; ++i) {
    const Eigen::VectorXcd phi = bfe_activations(est.bfe, v_grid(i)).cast<std::complex<double>>();
    const std::complex<double> point = est.coeffs.row(o) * phi;
    const bool has_phase = std::abs(point) >= 1e-12;
    const double center = has_phase ? std::arg(point) : 0.0;
    for (Index s = 0; s < n_mc; ++s) {
      const std::complex<double> z = draws[static_cast<std::size_t>(s)].row(o) * phi;
      amps[static_cast<std::size_t>(s)] = std::abs(z);
      phases[static_cast<std::size_t>(s)] = center + wrap_to_pi(std::arg(z) - center);
    }
    std::sort(amps.begin(), amps.end());
    std::sort(phases.begin(), phases.end());
    out.amplitude(i) = std::abs(point);
    out.amplitude_lo(i) = quantile(amps, p_lo);
    out.amplitude_hi(i) = quantile(amps, p_hi);
    out.phase(i) = has_phase ? center : nan;
    out.phase_lo(i) = has_phase ? quantile(phases, p_lo) : nan;
    out.phase_hi(i) = has_phase ? quantile(phases, p_hi) : nan;
  }
  return out;
}

namespace {
constexpr std::uint64_t kLocationStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
}  // namespace

double lpv_test_amplitude(Index component, double v) {
  switch (component) {
    case 0:
      return 2.0 * v * v;
    case 1:
      return 2.0 / (5.0 * v + 1.0);
    case 2:
      return 3.0 * std::exp(-10.0 * (v - 0.5) * (v - 0.5));
    default:
      throw Error(ErrorCode::kInvalidArgument, "test signal has three components");
  }
}

double lpv_test_phase(Index component, double v) { return 0.5 * lpv_test_amplitude(component, v); }

LpvTestSignal gen_lpv_test_signal(Index n, std::uint64_t seed, double noise) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two samples");
  if (!(noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise must be nonnegative");
  LpvTestSignal out;
  out.omega.resize(3);
  out.omega << 4.0 * std::numbers::pi, 20.0 * std::numbers::pi, 100.0 * std::numbers::pi;
  RandomStream loc(seed, kLocationStream), err(seed, kNoiseStream);
  ScheduledSignal& s = out.signal;
  s.v = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  s.x.resize(n);
  for (Index i = 0; i < n; ++i) s.x(i) = loc.uniform(0.0, 10.0);
  std::sort(s.x.begin(), s.x.end());
  s.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    double y = 0.0;
    for (Index c = 0; c < 3; ++c)
      y += lpv_test_amplitude(c, s.v(i)) *
           std::cos(out.omega(c) * s.x(i) - lpv_test_phase(c, s.v(i)));
    s.y(i) = y + noise * err.normal();
  }
  return out;
}

}  // namespace sysid
