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

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sysid/prox.hpp"

namespace sysid {

/// Gaussian kernels exp(-(v - mu_j)^2 / (2 sigma_j^2)) over the scheduling
/// variable, optionally normalized to sum to one.
struct BasisFunctionExpansion {
  Eigen::VectorXd centers;
  Eigen::VectorXd widths;
  bool normalized = true;

  Eigen::Index size() const { return centers.size(); }
  void validate() const;

  /// `count` centers evenly spaced over [lo, hi] with a common width equal to
  /// the spacing (hi - lo, or 1 if that is zero, for a single center).
  static BasisFunctionExpansion uniform(double lo, double hi, Eigen::Index count,
                                        bool normalized = true);
};

/// Activation vector of length J. When normalized and every raw activation
/// underflows (sum < 1e-300), returns the indicator of the nearest center.
Eigen::VectorXd bfe_activations(const BasisFunctionExpansion& bfe, double v);

/// Samples y_i taken at locations x_i (any order, any spacing) while the
/// scheduling variable was v_i.
struct ScheduledSignal {
  Eigen::VectorXd x;
  Eigen::VectorXd v;
  Eigen::VectorXd y;

  Eigen::Index size() const { return y.size(); }
  void validate() const;
};

/// Real regressor [Re A  Im A] for y_i ~ Re sum_w k_w^T phi(v_i) e^{-i w x_i}
/// folded into real unknowns. Column o * J + j holds phi_j(v) cos(w_o x); column
/// O * J + o * J + j holds -phi_j(v) sin(w_o x).
Eigen::MatrixXd build_regressor(const ScheduledSignal& signal, const Eigen::VectorXd& omega,
                                const BasisFunctionExpansion& bfe);

struct SpectralRegularizer {
  enum class Kind { kNone, kRidge, kL1, kGroupL2 };
  Kind kind = Kind::kNone;
  double lambda = 0.0;

  static SpectralRegularizer none() { return {Kind::kNone, 0.0}; }
  static SpectralRegularizer ridge(double l) { return {Kind::kRidge, l}; }
  static SpectralRegularizer l1(double l) { return {Kind::kL1, l}; }
  static SpectralRegularizer group_l2(double l) { return {Kind::kGroupL2, l}; }
  std::string tag() const;
};

struct SpectralEstimate {
  Eigen::VectorXd omega;
  // k_{w,j}, one row per frequency.
  Eigen::MatrixXcd coeffs;
  BasisFunctionExpansion bfe;
  double sigma2 = 0.0;
  // Covariance of the stacked (real, imaginary) unknowns in regressor column
  // order; present for unregularized and ridge fits.
  std::optional<Eigen::MatrixXd> covariance;
  std::string regularizer;

  Eigen::Index num_frequencies() const { return omega.size(); }
  // Stacked real unknowns, the inverse of coeffs_from_stacked.
  Eigen::VectorXd stacked() const;
};

/// Complex coefficients from the stacked real unknowns.
Eigen::MatrixXcd coeffs_from_stacked(const Eigen::VectorXd& k, Eigen::Index num_frequencies,
                                     Eigen::Index num_basis);

/// Least-squares fit of the expansion coefficients. The sparse variants
/// minimize ||y - A k||^2 + lambda h(k) with h the 1-norm or the sum over
/// frequencies of the 2-norm of all 2J real unknowns of that frequency.
/// Throws Error(kRankDeficient) for an unregularized fit on rank-deficient
/// data, Error(kMaxIterations) if ADMM does not converge.
SpectralEstimate fit_spectrum(const ScheduledSignal& signal, const Eigen::VectorXd& omega,
                              const BasisFunctionExpansion& bfe,
                              const SpectralRegularizer& regularizer = SpectralRegularizer::none(),
                              const ADMMOptions& admm = {});

struct RidgeSelection {
  double best_lambda = 0.0;
  std::vector<double> scores;
};

/// Generalized cross-validation N ||y - y_hat||^2 / (N - tr H)^2 of the ridge
/// fit for every lambda in `grid` (one SVD of the regressor); best = argmin.
RidgeSelection select_ridge_gcv(const ScheduledSignal& signal, const Eigen::VectorXd& omega,
                                const BasisFunctionExpansion& bfe,
                                const std::vector<double>& grid);

/// k_w^T phi(v) for frequency index o.
std::complex<double> spectral_value(const SpectralEstimate& est, Eigen::Index o, double v);
/// |k_w^T phi(v)|.
double amplitude(const SpectralEstimate& est, Eigen::Index o, double v);
/// arg(k_w^T phi(v)) in (-pi, pi]. Throws Error(kPhaseUndefined) when the
/// amplitude is below 1e-12. A component A cos(w x - p) has phase -p here,
/// since the regressors use e^{-i w x}.
double phase(const SpectralEstimate& est, Eigen::Index o, double v);
/// P(w) = |sum_j k_{w,j}|^2 per frequency.
Eigen::VectorXd power_spectrum(const SpectralEstimate& est);

/// Gamma = E[z z^H] and C = E[z z^T] of a complex vector whose stacked
/// (real, imaginary) parts have covariance `sigma`.
struct ComplexNormalMoments {
  Eigen::MatrixXcd gamma;
  Eigen::MatrixXcd relation;
};
ComplexNormalMoments complex_moments_from_real(const Eigen::MatrixXd& sigma);
/// Inverse of complex_moments_from_real.
Eigen::MatrixXd real_covariance_from_complex(const Eigen::MatrixXcd& gamma,
                                             const Eigen::MatrixXcd& relation);

/// n draws (columns) of mean + L xi, L L^T = sigma + jitter, split into real
/// and imaginary halves. Draw i uses stream i of `seed`. Throws
/// Error(kNotPositiveDefinite) if sigma is not positive semidefinite.
Eigen::MatrixXcd sample_complex_normal(const Eigen::VectorXcd& mean, const Eigen::MatrixXd& sigma,
                                       Eigen::Index n, std::uint64_t seed);

/// Posterior draws of the coefficient matrix. Throws Error(kInvalidArgument)
/// when the estimate carries no covariance.
std::vector<Eigen::MatrixXcd> sample_coefficients(const SpectralEstimate& est, Eigen::Index n,
                                                  std::uint64_t seed);

struct ConfidenceBands {
  Eigen::VectorXd amplitude;
  Eigen::VectorXd amplitude_lo;
  Eigen::VectorXd amplitude_hi;
  // NaN where the point amplitude is too small for a phase.
  Eigen::VectorXd phase;
  Eigen::VectorXd phase_lo;
  Eigen::VectorXd phase_hi;
};

/// Monte Carlo percentile bands of amplitude and phase over `v_grid`. Phase
/// samples are unwrapped to within pi of the point estimate first, so the
/// band may leave (-pi, pi].
ConfidenceBands confidence_bands(const SpectralEstimate& est, Eigen::Index o,
                                 const Eigen::VectorXd& v_grid, double level, Eigen::Index n_mc,
                                 std::uint64_t seed);

// Synthetic test signal -------------------------------------------------------

/// Three components at 4 pi, 20 pi and 100 pi with amplitudes 2 v^2,
/// 2 / (5 v + 1) and 3 exp(-10 (v - 0.5)^2) and phases p = A / 2:
/// y = sum A cos(w x - p) + e, v = linspace(0, 1, N), x = sort(U(0, 10)).
struct LpvTestSignal {
  ScheduledSignal signal;
  Eigen::VectorXd omega;
};
LpvTestSignal gen_lpv_test_signal(Eigen::Index n = 500, std::uint64_t seed = 0,
                                  double noise = 0.1);
double lpv_test_amplitude(Eigen::Index component, double v);
double lpv_test_phase(Eigen::Index component, double v);

}  // namespace sysid
