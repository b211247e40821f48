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

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sysid/random.hpp"

namespace sysid {

/// x_{t+1} = A_t x_t + B_t u_t + v_t,  y_t = C_t x_t + e_t,
/// v ~ N(0, R1), e ~ N(0, R2), x_0 ~ N(x0, P0).
///
/// Each of A, B, C holds either one matrix (time invariant) or one matrix per
/// sample. B may be left empty when there is no input.
struct LinearGaussianModel {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> B;
  std::vector<Eigen::MatrixXd> C;
  Eigen::MatrixXd R1;
  Eigen::MatrixXd R2;
  Eigen::VectorXd x0;
  Eigen::MatrixXd P0;

  Eigen::Index state_dim() const { return x0.size(); }
  Eigen::Index output_dim() const { return R2.rows(); }
  Eigen::Index input_dim() const { return B.empty() ? 0 : B.front().cols(); }

  const Eigen::MatrixXd& A_at(Eigen::Index t) const { return pick(A, t); }
  const Eigen::MatrixXd& B_at(Eigen::Index t) const { return pick(B, t); }
  const Eigen::MatrixXd& C_at(Eigen::Index t) const { return pick(C, t); }

  /// Checks shapes against a record of `length` samples and the covariance
  /// invariants. Throws Error(kDimensionMismatch / kInvalidArgument /
  /// kNotPositiveDefinite).
  void validate(Eigen::Index length) const;

 private:
  static const Eigen::MatrixXd& pick(const std::vector<Eigen::MatrixXd>& v, Eigen::Index t) {
    return v.size() == 1 ? v.front() : v[static_cast<std::size_t>(t)];
  }
};

struct GaussianStateSequence {
  std::vector<Eigen::VectorXd> filtered_means;
  std::vector<Eigen::MatrixXd> filtered_covs;
  // predicted_means[t] is x_{t|t-1}; predicted_means[0] = x0.
  std::vector<Eigen::VectorXd> predicted_means;
  std::vector<Eigen::MatrixXd> predicted_covs;
  std::vector<Eigen::VectorXd> smoothed_means;
  std::vector<Eigen::MatrixXd> smoothed_covs;
  double loglik = 0.0;

  std::size_t size() const { return filtered_means.size(); }
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct CorrectionResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd innovation;
  // Innovation covariance.
  Eigen::MatrixXd S;
  // log N(innovation; 0, S).
  double loglik = 0.0;
};

/// Prior N(mean, cov) on map * x_t, or on x_t itself when `map` is empty.
/// An empty optional from a PriorFunction means no prior at that step.
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd map;
};
using PriorFunction = std::function<std::optional<GaussianPrior>(Eigen::Index t)>;

struct FilterOptions {
  // Joseph-form covariance update instead of P - K C P.
  bool joseph = false;
};

GaussianMoments kf_predict(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::VectorXd& u, const Eigen::MatrixXd& R1);

/// Measurement update. Throws Error(kSingularInnovation) when C P C^T + R2 is
/// not numerically positive definite.
CorrectionResult kf_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           const Eigen::MatrixXd& C, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& R2, const FilterOptions& options = {});

/// Fuses N(mean, cov) with the prior N(mu0, sigma0), i.e. a measurement of the
/// full state. Throws Error(kSingularSum) when cov + sigma0 is singular.
CorrectionResult prior_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                              const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0);

/// Forward pass over observations (rows of `observations`) and inputs (rows of
/// `inputs`; may have zero columns). The prior, when given, is applied after
/// the measurement update at every step where it returns a value; its fusion
/// term counts towards the log-likelihood.
GaussianStateSequence kalman_filter(const LinearGaussianModel& model,
                                    const Eigen::MatrixXd& observations,
                                    const Eigen::MatrixXd& inputs,
                                    const PriorFunction& prior = nullptr,
                                    const FilterOptions& options = {});

/// Rauch-Tung-Striebel backward pass. Fills the smoothed fields of a copy of
/// `filtered`. Throws Error(kSingularPredictedCov).
GaussianStateSequence rts_smooth(const GaussianStateSequence& filtered,
                                 const LinearGaussianModel& model);

// Symmetric part of a square matrix.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

// Bootstrap particle filter -------------------------------------------------

// Every sampler call receives its own stream, keyed by (seed, step, particle).
using InitSampler = std::function<Eigen::VectorXd(RandomStream& rng)>;
// Draws x_{t+1} given x_t.
using TransitionSampler =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, Eigen::Index t, RandomStream& rng)>;
// log p(y_t | x_t); -infinity is allowed.
using ObservationLoglik =
    std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::Index t)>;

struct ParticleFilterOptions {
  // When true, resample only if the effective sample size drops below
  // ess_fraction * n_particles. Otherwise resample every step.
  bool ess_resampling = false;
  double ess_fraction = 0.5;
  bool store_clouds = true;
};

struct ParticleCloud {
  // One particle per column.
  Eigen::MatrixXd particles;
  // Normalized weights after incorporating the observation at this step.
  Eigen::VectorXd weights;
};

struct ParticleFilterResult {
  std::vector<ParticleCloud> clouds;
  // Weighted mean at each step (rows).
  Eigen::MatrixXd estimates;
  std::vector<bool> resampled;
};

/// Algorithm: draw particles, then for every observation weight, estimate,
/// resample (systematic, one uniform per step) and propagate. Throws
/// Error(kDegenerateWeights) when every particle has zero likelihood.
ParticleFilterResult particle_filter(const InitSampler& init, const TransitionSampler& transition,
                                     const ObservationLoglik& obs_loglik,
                                     const Eigen::MatrixXd& observations,
                                     Eigen::Index n_particles, std::uint64_t seed,
                                     const ParticleFilterOptions& options = {});

/// Systematic resampling: ancestors for offsets (u + i) / N, u in [0, 1).
std::vector<Eigen::Index> systematic_resample(const Eigen::VectorXd& weights, double u);

}  // namespace sysid
