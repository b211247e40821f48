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

#include "sysid/kalman.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sysid/error.hpp"

namespace sysid {
namespace {

// Reciprocal condition numbers below this are treated as singular.
constexpr double kSingularRcond = 1e-15;

bool factor_pd(const Eigen::MatrixXd& m, Eigen::LLT<Eigen::MatrixXd>* llt) {
  if (!m.allFinite()) return false;
  llt->compute(m);
  return llt->info() == Eigen::Success && llt->rcond() > kSingularRcond;
}

double gaussian_loglik(const Eigen::VectorXd& r, const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi) + logdet +
                 w.squaredNorm());
}

void check_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n)
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(name) + " must be " + std::to_string(n) + "x" + std::to_string(n));
}

void check_psd(const Eigen::MatrixXd& m, const char* name) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " is not symmetric");
  if (m.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw Error(ErrorCode::kNotPositiveDefinite, std::string(name) + " is not PSD");
}

void check_sequence(const std::vector<Eigen::MatrixXd>& v, Eigen::Index length, Eigen::Index rows,
                    Eigen::Index cols, const char* name) {
  if (v.size() != 1 && static_cast<Eigen::Index>(v.size()) < length)
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(name) + " must hold one matrix or one per sample");
  for (const auto& m : v)
    if (m.rows() != rows || (cols >= 0 && m.cols() != cols))
      throw Error(ErrorCode::kDimensionMismatch, std::string(name) + " has the wrong shape");
}

}  // namespace

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

void LinearGaussianModel::validate(Eigen::Index length) const {
  const Eigen::Index n = state_dim();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty state");
  check_square(P0, n, "P0");
  check_square(R1, n, "R1");
  check_sequence(A, length - 1, n, n, "A");
  if (!B.empty()) check_sequence(B, length - 1, n, -1, "B");
  check_sequence(C, length, output_dim(), n, "C");
  check_square(R2, output_dim(), "R2");
  check_psd(P0, "P0");
  check_psd(R1, "R1");
  check_psd(R2, "R2");
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!factor_pd(R2, &llt)) throw Error(ErrorCode::kNotPositiveDefinite, "R2 is not PD");
}

GaussianMoments kf_predict(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::VectorXd& u, const Eigen::MatrixXd& R1) {
  GaussianMoments out;
  out.mean = A * mean;
  if (B.cols() > 0) out.mean += B * u;
  out.cov = symmetrize(A * cov * A.transpose() + R1);
  return out;
}

CorrectionResult kf_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           const Eigen::MatrixXd& C, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& R2, const FilterOptions& options) {
  CorrectionResult out;
  const Eigen::MatrixXd cp = C * cov;
  out.S = symmetrize(cp * C.transpose() + R2);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!factor_pd(out.S, &llt))
    throw Error(ErrorCode::kSingularInnovation, "innovation covariance is singular");
  out.innovation = y - C * mean;
  // K = P C^T S^{-1}
  const Eigen::MatrixXd gain = llt.solve(cp).transpose();
  out.mean = mean + gain * out.innovation;
  if (options.joseph) {
    const Eigen::MatrixXd ikc =
        Eigen::MatrixXd::Identity(cov.rows(), cov.cols()) - gain * C;
    out.cov = symmetrize(ikc * cov * ikc.transpose() + gain * R2 * gain.transpose());
  } else {
    out.cov = symmetrize(cov - gain * cp);
  }
  out.loglik = gaussian_loglik(out.innovation, llt);
  return out;
}

CorrectionResult prior_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                              const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0) {
  if (mu0.size() != mean.size() || sigma0.rows() != mean.size() || sigma0.cols() != mean.size())
    throw Error(ErrorCode::kDimensionMismatch, "prior does not match the state dimension");
  CorrectionResult out;
  out.S = symmetrize(cov + sigma0);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!factor_pd(out.S, &llt))
    throw Error(ErrorCode::kSingularSum, "state and prior covariances sum to a singular matrix");
  out.innovation = mu0 - mean;
  const Eigen::MatrixXd gain = llt.solve(cov).transpose();
  out.mean = mean + gain * out.innovation;
  out.cov = symmetrize(cov - gain * cov);
  out.loglik = gaussian_loglik(out.innovation, llt);
  return out;
}

GaussianStateSequence kalman_filter(const LinearGaussianModel& model,
                                    const Eigen::MatrixXd& observations,
                                    const Eigen::MatrixXd& inputs, const PriorFunction& prior,
                                    const FilterOptions& options) {
  const Eigen::Index length = observations.rows();
  if (length == 0) throw Error(ErrorCode::kInvalidArgument, "no observations");
  model.validate(length);
  if (observations.cols() != model.output_dim())
    throw Error(ErrorCode::kDimensionMismatch, "observation width differs from R2");
  if (model.input_dim() > 0 &&
      (inputs.cols() != model.input_dim() || inputs.rows() < length - 1))
    throw Error(ErrorCode::kDimensionMismatch, "inputs do not match B");

  GaussianStateSequence seq;
  const auto n = static_cast<std::size_t>(length);
  seq.filtered_means.reserve(n);
  seq.filtered_covs.reserve(n);
  seq.predicted_means.reserve(n);
  seq.predicted_covs.reserve(n);

  Eigen::VectorXd mean = model.x0;
  Eigen::MatrixXd cov = model.P0;
  const Eigen::VectorXd no_input;
  for (Eigen::Index t = 0; t < length; ++t) {
    if (t > 0) {
      const GaussianMoments p =
          model.input_dim() > 0
              ? kf_predict(mean, cov, model.A_at(t - 1), model.B_at(t - 1),
                           inputs.row(t - 1).transpose(), model.R1)
              : kf_predict(mean, cov, model.A_at(t - 1), Eigen::MatrixXd(), no_input, model.R1);
      mean = p.mean;
      cov = p.cov;
    }
    seq.predicted_means.push_back(mean);
    seq.predicted_covs.push_back(cov);

    CorrectionResult c = kf_update(mean, cov, model.C_at(t), observations.row(t).transpose(),
                                   model.R2, options);
    seq.loglik += c.loglik;
    mean = std::move(c.mean);
    cov = std::move(c.cov);
    if (prior) {
      if (const auto p = prior(t)) {
        CorrectionResult pc = p->map.size() == 0
                                  ? prior_update(mean, cov, p->mean, p->cov)
                                  : kf_update(mean, cov, p->map, p->mean, p->cov, options);
        seq.loglik += pc.loglik;
        mean = std::move(pc.mean);
        cov = std::move(pc.cov);
      }
    }
    seq.filtered_means.push_back(mean);
    seq.filtered_covs.push_back(cov);
  }
  return seq;
}

GaussianStateSequence rts_smooth(const GaussianStateSequence& filtered,
                                 const LinearGaussianModel& model) {
  const std::size_t length = filtered.size();
  if (length == 0 || filtered.predicted_means.size() != length ||
      filtered.predicted_covs.size() != length || filtered.filtered_covs.size() != length)
    throw Error(ErrorCode::kInvalidArgument, "filter output lacks predicted moments");
  GaussianStateSequence out = filtered;
  out.smoothed_means.assign(length, Eigen::VectorXd());
  out.smoothed_covs.assign(length, Eigen::MatrixXd());
  out.smoothed_means[length - 1] = filtered.filtered_means[length - 1];
  out.smoothed_covs[length - 1] = filtered.filtered_covs[length - 1];
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (std::size_t i = length - 1; i-- > 0;) {
    const Eigen::MatrixXd& p_pred = filtered.predicted_covs[i + 1];
    if (!factor_pd(p_pred, &llt))
      throw Error(ErrorCode::kSingularPredictedCov,
                  "predicted covariance at sample " + std::to_string(i + 1) + " is singular");
    const Eigen::MatrixXd& a = model.A_at(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd& p_filt = filtered.filtered_covs[i];
    // G = P_{t|t} A^T P_{t+1|t}^{-1}
    const Eigen::MatrixXd gain = llt.solve(a * p_filt).transpose();
    out.smoothed_means[i] =
        filtered.filtered_means[i] +
        gain * (out.smoothed_means[i + 1] - filtered.predicted_means[i + 1]);
    out.smoothed_covs[i] =
        symmetrize(p_filt + gain * (out.smoothed_covs[i + 1] - p_pred) * gain.transpose());
  }
  return out;
}

std::vector<Eigen::Index> systematic_resample(const Eigen::VectorXd& weights, double u) {
  const Eigen::Index n = weights.size();
  std::vector<Eigen::Index> ancestors(static_cast<std::size_t>(n));
  const double total = weights.sum();
  double cumulative = weights(0) / total;
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double target = (u + static_cast<double>(i)) / static_cast<double>(n);
    while (cumulative < target && j < n - 1) cumulative += weights(++j) / total;
    ancestors[static_cast<std::size_t>(i)] = j;
  }
  return ancestors;
}

namespace {

// Stream layout: bit 62 marks resampling draws; otherwise the upper 31 bits
// of the low 62 hold the step and the lower 31 bits the particle.
std::uint64_t particle_stream(Eigen::Index step, Eigen::Index particle) {
  return (static_cast<std::uint64_t>(step) << 31) | static_cast<std::uint64_t>(particle);
}
constexpr std::uint64_t kResampleStream = 1ULL << 62;

}  // namespace

ParticleFilterResult particle_filter(const InitSampler& init, const TransitionSampler& transition,
                                     const ObservationLoglik& obs_loglik,
                                     const Eigen::MatrixXd& observations,
                                     Eigen::Index n_particles, std::uint64_t seed,
                                     const ParticleFilterOptions& options) {
  if (n_particles < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two particles");
  if (n_particles >= (Eigen::Index{1} << 31))
    throw Error(ErrorCode::kInvalidArgument, "too many particles");
  if (!init || !transition || !obs_loglik)
    throw Error(ErrorCode::kInvalidArgument, "particle filter needs all three callbacks");
  const Eigen::Index length = observations.rows();

  std::vector<Eigen::VectorXd> particles(static_cast<std::size_t>(n_particles));
  for (Eigen::Index i = 0; i < n_particles; ++i) {
    RandomStream rng(seed, particle_stream(0, i));
    particles[static_cast<std::size_t>(i)] = init(rng);
  }
  const Eigen::Index dim = particles.front().size();

  ParticleFilterResult result;
  result.estimates.resize(length, dim);
  Eigen::VectorXd logw = Eigen::VectorXd::Zero(n_particles);
  Eigen::VectorXd weights(n_particles);
  for (Eigen::Index t = 0; t < length; ++t) {
    const Eigen::VectorXd y = observations.row(t).transpose();
    for (Eigen::Index i = 0; i < n_particles; ++i) {
      const double l = obs_loglik(particles[static_cast<std::size_t>(i)], y, t);
      logw(i) += std::isnan(l) ? -std::numeric_limits<double>::infinity() : l;
    }
    const double top = logw.maxCoeff();
    if (!std::isfinite(top))
      throw Error(ErrorCode::kDegenerateWeights,
                  "all particles have zero likelihood at step " + std::to_string(t));
    weights = (logw.array() - top).exp();
    weights /= weights.sum();

    Eigen::VectorXd est = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < n_particles; ++i)
      est += weights(i) * particles[static_cast<std::size_t>(i)];
    result.estimates.row(t) = est.transpose();
    if (options.store_clouds) {
      ParticleCloud cloud;
      cloud.particles.resize(dim, n_particles);
      for (Eigen::Index i = 0; i < n_particles; ++i)
        cloud.particles.col(i) = particles[static_cast<std::size_t>(i)];
      cloud.weights = weights;
      result.clouds.push_back(std::move(cloud));
    }

    bool resample = true;
    if (options.ess_resampling) {
      const double ess = 1.0 / weights.squaredNorm();
      resample = ess < options.ess_fraction * static_cast<double>(n_particles);
    }
    result.resampled.push_back(resample);
    if (resample) {
      const double u = CounterRng(seed, kResampleStream).uniform(static_cast<std::uint64_t>(t));
      const auto ancestors = systematic_resample(weights, u);
      std::vector<Eigen::VectorXd> next(static_cast<std::size_t>(n_particles));
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = particles[static_cast<std::size_t>(ancestors[i])];
      particles = std::move(next);
      logw.setZero();
    } else {
      logw = weights.array().log();
    }

    if (t + 1 < length) {
      for (Eigen::Index i = 0; i < n_particles; ++i) {
        RandomStream rng(seed, particle_stream(t + 1, i));
        auto& p = particles[static_cast<std::size_t>(i)];
        p = transition(p, t, rng);
      }
    }
  }
  return result;
}

}  // namespace sysid
