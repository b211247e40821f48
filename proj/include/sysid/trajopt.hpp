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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sysid/kalman.hpp"
#include "sysid/simulators.hpp"

namespace sysid {

// Trajectories in this module hold one row per time step: states x_0..x_T in
// a (T + 1) x n matrix and controls u_0..u_{T-1} in a T x m matrix.

/// Stage cost c_t(x, u) = d^T c_s + 0.5 d^T c_ss d with d = [x; u] - r_t, plus
/// a terminal cost of the same form on x_T.
struct QuadraticCost {
  Eigen::Index state_dim = 0;
  std::vector<Eigen::MatrixXd> c_ss;
  std::vector<Eigen::VectorXd> c_s;
  std::vector<Eigen::VectorXd> reference;
  // n x n, n and n; left empty for no terminal cost.
  Eigen::MatrixXd terminal_ss;
  Eigen::VectorXd terminal_s;
  Eigen::VectorXd terminal_reference;

  Eigen::Index horizon() const { return static_cast<Eigen::Index>(c_ss.size()); }
  Eigen::Index n() const { return state_dim; }
  Eigen::Index m() const { return c_ss.empty() ? 0 : c_ss.front().rows() - state_dim; }
  bool has_terminal() const { return terminal_ss.size() > 0; }

  /// Checks shapes and symmetry. Throws Error(kDimensionMismatch /
  /// kInvalidArgument).
  void validate() const;

  double stage(Eigen::Index t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  double terminal(const Eigen::VectorXd& x) const;
  double total(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) const;
  /// Gradient of the stage cost at (x, u).
  Eigen::VectorXd stage_gradient(Eigen::Index t, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& u) const;

  /// 0.5 (x - x_ref)^T Q (x - x_ref) + 0.5 (u - u_ref)^T R (u - u_ref) at every
  /// step, with terminal weight Qf (empty for none).
  static QuadraticCost tracking(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                Eigen::Index horizon, const Eigen::VectorXd& x_ref,
                                const Eigen::VectorXd& u_ref,
                                const Eigen::MatrixXd& Qf = Eigen::MatrixXd());

  static QuadraticCost zero(Eigen::Index n, Eigen::Index m, Eigen::Index horizon);
};

/// Discrete-time dynamics x_{t+1} = f(t, x_t, u_t). `jacobian`, when set,
/// returns the exact (f_x, f_u); otherwise central differences are used.
struct Dynamics {
  using Step = std::function<Eigen::VectorXd(Eigen::Index t, const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& u)>;
  using Jacobian = std::function<void(Eigen::Index t, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u, Eigen::MatrixXd& fx,
                                      Eigen::MatrixXd& fu)>;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  Step step;
  Jacobian jacobian;
};

/// (f_x, f_u) at (t, x, u). Falls back to central differences with step
/// 1e-6 (1 + |z_i|) per coordinate.
void linearize(const Dynamics& f, Eigen::Index t, const Eigen::VectorXd& x,
               const Eigen::VectorXd& u, Eigen::MatrixXd& fx, Eigen::MatrixXd& fu);

/// Pendulum on a cart with exact RK4 Jacobians.
Dynamics pendulum_dynamics(const PendulumParams& params = {});

/// x_{t+1} = A_t x_t + B_t u_t + c_t + N(0, noise_t). Noise matrices may be
/// left empty (deterministic).
struct LinearGaussianDynamics {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> B;
  std::vector<Eigen::VectorXd> c;
  std::vector<Eigen::MatrixXd> noise;

  Eigen::Index horizon() const { return static_cast<Eigen::Index>(A.size()); }
  Eigen::Index n() const { return A.empty() ? 0 : A.front().rows(); }
  Eigen::Index m() const { return B.empty() ? 0 : B.front().cols(); }
  void validate() const;
  /// The deterministic part as a Dynamics.
  Dynamics as_dynamics() const;
};

/// Local linearization of `f` along (x, u), with offsets c_t chosen so the
/// nominal trajectory is reproduced exactly.
LinearGaussianDynamics linearize_along(const Dynamics& f, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& u);

/// u_t ~ N(u_hat_t + K_t (x_t - x_hat_t), cov_t).
struct GaussianPolicy {
  Eigen::MatrixXd x_hat;
  Eigen::MatrixXd u_hat;
  std::vector<Eigen::MatrixXd> K;
  std::vector<Eigen::MatrixXd> cov;

  Eigen::Index horizon() const { return u_hat.rows(); }
  Eigen::VectorXd mean(Eigen::Index t, const Eigen::VectorXd& x) const;
};

/// p(x_0) prod_t p(x_{t+1} | x_t, u_t) p(u_t | x_t).
struct TrajectoryDistribution {
  LinearGaussianDynamics dynamics;
  GaussianPolicy policy;
  Eigen::VectorXd x0_mean;
  Eigen::MatrixXd x0_cov;
};

/// KL(p || q) of two trajectory distributions, summing the expected KL of
/// every conditional under the marginals of p. Identical conditionals
/// contribute exactly zero. Throws Error(kSingularCovariance) when a
/// conditional of q that differs from p has a singular covariance, and
/// Error(kDimensionMismatch) for mismatched shapes.
double kl_traj(const TrajectoryDistribution& p, const TrajectoryDistribution& q);

/// Result of the backward recursion along a nominal trajectory.
struct BackwardPass {
  std::vector<Eigen::MatrixXd> K;
  std::vector<Eigen::VectorXd> k;
  std::vector<Eigen::VectorXd> v_x;   // T + 1 entries, v_x[T] terminal
  std::vector<Eigen::MatrixXd> v_xx;  // T + 1 entries
  std::vector<Eigen::MatrixXd> q_uu;  // regularized
  // Predicted cost change of the full step: dV1 + dV2 for alpha = 1, and
  // alpha dV1 + alpha^2 dV2 in general.
  double dv1 = 0.0;
  double dv2 = 0.0;
};

struct BackwardOptions {
  // Added to Q_uu at every step.
  double mu = 0.0;
  // Controls at or beyond these bounds in the nominal get zero feedback rows.
  std::optional<Eigen::VectorXd> u_min;
  std::optional<Eigen::VectorXd> u_max;
};

/// LQR backward recursion for deviations around (x_hat, u_hat) under the
/// linearized dynamics `model` (offsets are ignored), starting from
/// V_{T+1} = terminal cost. K = -Q_uu^-1 Q_ux and k = -Q_uu^-1 Q_u.
/// Throws Error(kNonPDQuu) naming the step when Q_uu + mu I is not PD.
BackwardPass lqr_backward(const LinearGaussianDynamics& model, const QuadraticCost& cost,
                          const Eigen::MatrixXd& x_hat, const Eigen::MatrixXd& u_hat,
                          const BackwardOptions& options = {});

/// Limit on KL(new || previous) of trajectory distributions, evaluated under
/// the local linearization with process noise `process_noise`.
struct KLConstraint {
  GaussianPolicy previous;
  double epsilon = 10.0;
  std::vector<Eigen::MatrixXd> process_noise;
  Eigen::MatrixXd x0_cov;
  int max_dual_steps = 10;
};

struct ILQROptions {
  std::optional<Eigen::VectorXd> u_min;
  std::optional<Eigen::VectorXd> u_max;
  int max_iterations = 100;
  // Converged when the relative cost decrease of a step (or the predicted
  // decrease of the next one) falls below this.
  double tolerance = 1e-6;
  double mu_max = 1e6;
  int max_backtracks = 16;
  std::optional<KLConstraint> kl;
};

enum class ILQRStatus { kConverged, kMaxIterations, kLineSearchFailed };

struct ILQRSolution {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
  std::vector<Eigen::VectorXd> k;
  std::vector<Eigen::MatrixXd> K;
  std::vector<Eigen::MatrixXd> q_uu;
  std::vector<Eigen::MatrixXd> cov;
  std::vector<Eigen::VectorXd> v_x;
  std::vector<Eigen::MatrixXd> v_xx;
  // Objective before the first and after every accepted iteration. With a KL
  // constraint this is the penalized objective of the final dual step.
  std::vector<double> cost_trace;
  // Unpenalized cost of the returned nominal.
  double cost = 0.0;
  int iterations = 0;
  ILQRStatus status = ILQRStatus::kMaxIterations;
  bool converged = false;
  // KL constraint bookkeeping (zero without one).
  double kl = 0.0;
  double kl_multiplier = 0.0;
};

/// Iterative LQR with clamped controls and, optionally, a KL limit enforced
/// by a dual search on the weight of -log p_previous(u | x) in the cost.
/// u_init must lie within the bounds. A failed line search returns the best
/// iterate with status kLineSearchFailed. Throws Error(kNonPDQuu) when
/// Q_uu stays indefinite at mu_max.
ILQRSolution ilqr(const Dynamics& f, const QuadraticCost& cost, const Eigen::VectorXd& x0,
                  const Eigen::MatrixXd& u_init, const ILQROptions& options = {});

/// Sigma_t = Q_uu^-1 per step, symmetrized and jittered to be PD.
std::vector<Eigen::MatrixXd> exploration_covariances(const std::vector<Eigen::MatrixXd>& q_uu);

/// Gaussian policy of a solution: its nominal, gains and Q_uu^-1.
GaussianPolicy exploration_policy(const ILQRSolution& sol);

/// x_0 .. x_T of u_t = clamp(policy mean + noise_t) on f; noise rows may be
/// empty (zero). Returns the states and applied controls.
void rollout(const Dynamics& f, const GaussianPolicy& policy, const Eigen::VectorXd& x0,
             const Eigen::MatrixXd& noise, const std::optional<Eigen::VectorXd>& u_min,
             const std::optional<Eigen::VectorXd>& u_max, Eigen::MatrixXd& x, Eigen::MatrixXd& u);

// Model-based reinforcement learning ------------------------------------------

enum class RLModel { kTruth, kLTV, kLTVPrior, kLTI };

/// Parse "truth" | "ltv" | "ltv_prior" | "lti"; throws Error(kInvalidArgument).
RLModel parse_rl_model(const std::string& name);

struct RLOptions {
  int iterations = 25;
  std::uint64_t seed = 0;
  double kl_epsilon = 10.0;
  // Exploration covariance (times I) of the first rollout. Defaults to the
  // inverse of the control block of the stage cost.
  std::optional<double> initial_exploration;
  // lambda of the LTV fit.
  double ltv_lambda = 1.0;
  // Prior on k_t for kLTVPrior. The parameters of step t are
  // vec([A_t B_t c_t]^T), the model being fitted with a constant input.
  PriorFunction prior;
  ILQROptions ilqr;
};

struct RLResult {
  // Cost of the noiseless closed-loop rollout on the environment after each
  // learning iteration.
  std::vector<double> cost_trace;
  std::vector<double> kl_trace;
  GaussianPolicy policy;
  ILQRSolution last;
};

/// Repeats: rollout on `env` with the exploration policy, fit a model on the
/// rollout, re-optimize under the model with a KL limit against the previous
/// trajectory distribution. kTruth skips the fit and the limit and solves
/// with env itself.
RLResult rl_loop(const Dynamics& env, RLModel model, const QuadraticCost& cost,
                 const Eigen::VectorXd& x0, const Eigen::MatrixXd& u_init,
                 const RLOptions& options = {});

/// The pendulum damping task: start 0.1 rad from upright at rest, drive all
/// states to the downward rest position over `horizon` steps with
/// |u| <= 10.
struct PendulumTask {
  Dynamics env;
  QuadraticCost cost;
  Eigen::VectorXd x0;
  Eigen::MatrixXd u_init;
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
};
PendulumTask pendulum_damping_task(Eigen::Index horizon = 400, const PendulumParams& params = {});

}  // namespace sysid
