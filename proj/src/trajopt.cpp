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

#include "sysid/trajopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sysid/error.hpp"
#include "sysid/least_squares.hpp"
#include "sysid/ltv.hpp"
#include "sysid/random.hpp"

namespace sysid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::size_t idx(Index t) { return static_cast<std::size_t>(t); }

bool is_symmetric(const MatrixXd& m) {
  return (m - m.transpose()).norm() <= 1e-10 * std::max(1.0, m.norm());
}

MatrixXd or_zero(const MatrixXd& m, Index n) { return m.size() == 0 ? MatrixXd::Zero(n, n) : m; }

VectorXd stack(const VectorXd& x, const VectorXd& u) {
  VectorXd s(x.size() + u.size());
  s << x, u;
  return s;
}

VectorXd clamp(VectorXd u, const std::optional<VectorXd>& lo, const std::optional<VectorXd>& hi) {
  if (lo) u = u.cwiseMax(*lo);
  if (hi) u = u.cwiseMin(*hi);
  return u;
}

}  // namespace

// QuadraticCost --------------------------------------------------------------

void QuadraticCost::validate() const {
  const Index t_count = horizon();
  if (t_count < 1) throw Error(ErrorCode::kInvalidArgument, "cost horizon must be positive");
  if (state_dim < 1) throw Error(ErrorCode::kInvalidArgument, "cost state dimension must be set");
  if (c_s.size() != c_ss.size() || reference.size() != c_ss.size())
    throw Error(ErrorCode::kDimensionMismatch, "c_s, c_ss and reference need one entry per step");
  const Index d = c_ss.front().rows();
  if (d <= state_dim) throw Error(ErrorCode::kDimensionMismatch, "c_ss smaller than the state");
  for (Index t = 0; t < t_count; ++t) {
    const MatrixXd& h = c_ss[idx(t)];
    if (h.rows() != d || h.cols() != d || c_s[idx(t)].size() != d || reference[idx(t)].size() != d)
      throw Error(ErrorCode::kDimensionMismatch, "stage cost terms have inconsistent sizes");
    if (!is_symmetric(h)) throw Error(ErrorCode::kInvalidArgument, "c_ss must be symmetric");
  }
  if (has_terminal()) {
    if (terminal_ss.rows() != state_dim || terminal_ss.cols() != state_dim ||
        terminal_s.size() != state_dim || terminal_reference.size() != state_dim)
      throw Error(ErrorCode::kDimensionMismatch, "terminal cost terms have inconsistent sizes");
    if (!is_symmetric(terminal_ss))
      throw Error(ErrorCode::kInvalidArgument, "terminal_ss must be symmetric");
  }
}

double QuadraticCost::stage(Index t, const VectorXd& x, const VectorXd& u) const {
  const VectorXd d = stack(x, u) - reference[idx(t)];
  return d.dot(c_s[idx(t)]) + 0.5 * d.dot(c_ss[idx(t)] * d);
}

double QuadraticCost::terminal(const VectorXd& x) const {
  if (!has_terminal()) return 0.0;
  const VectorXd d = x - terminal_reference;
  return d.dot(terminal_s) + 0.5 * d.dot(terminal_ss * d);
}

double QuadraticCost::total(const MatrixXd& x, const MatrixXd& u) const {
  if (u.rows() != horizon() || x.rows() != horizon() + 1)
    throw Error(ErrorCode::kDimensionMismatch, "trajectory length does not match the cost horizon");
  double sum = terminal(x.row(horizon()).transpose());
  for (Index t = 0; t < horizon(); ++t) sum += stage(t, x.row(t).transpose(), u.row(t).transpose());
  return sum;
}

VectorXd QuadraticCost::stage_gradient(Index t, const VectorXd& x, const VectorXd& u) const {
  return c_s[idx(t)] + c_ss[idx(t)] * (stack(x, u) - reference[idx(t)]);
}

QuadraticCost QuadraticCost::tracking(const MatrixXd& Q, const MatrixXd& R, Index horizon,
                                      const VectorXd& x_ref, const VectorXd& u_ref,
                                      const MatrixXd& Qf) {
  const Index n = Q.rows(), m = R.rows();
  if (Q.cols() != n || R.cols() != m || x_ref.size() != n || u_ref.size() != m)
    throw Error(ErrorCode::kDimensionMismatch, "tracking cost sizes do not match");
  QuadraticCost cost;
  cost.state_dim = n;
  MatrixXd h = MatrixXd::Zero(n + m, n + m);
  h.topLeftCorner(n, n) = Q;
  h.bottomRightCorner(m, m) = R;
  cost.c_ss.assign(idx(horizon), h);
  cost.c_s.assign(idx(horizon), VectorXd::Zero(n + m));
  cost.reference.assign(idx(horizon), stack(x_ref, u_ref));
  if (Qf.size() > 0) {
    cost.terminal_ss = Qf;
    cost.terminal_s = VectorXd::Zero(n);
    cost.terminal_reference = x_ref;
  }
  cost.validate();
  return cost;
}

QuadraticCost QuadraticCost::zero(Index n, Index m, Index horizon) {
  return tracking(MatrixXd::Zero(n, n), MatrixXd::Zero(m, m), horizon, VectorXd::Zero(n),
                  VectorXd::Zero(m));
}

// Dynamics -------------------------------------------------------------------

void linearize(const Dynamics& f, Index t, const VectorXd& x, const VectorXd& u, MatrixXd& fx,
               MatrixXd& fu) {
  if (f.jacobian) {
    f.jacobian(t, x, u, fx, fu);
    return;
  }
  const Index n = x.size(), m = u.size();
  fx.resize(n, n);
  fu.resize(n, m);
  VectorXd xp = x, up = u;
  for (Index i = 0; i < n; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x(i)));
    xp(i) = x(i) + h;
    const VectorXd hi = f.step(t, xp, u);
    xp(i) = x(i) - h;
    fx.col(i) = (hi - f.step(t, xp, u)) / (2.0 * h);
    xp(i) = x(i);
  }
  for (Index i = 0; i < m; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(u(i)));
    up(i) = u(i) + h;
    const VectorXd hi = f.step(t, x, up);
    up(i) = u(i) - h;
    fu.col(i) = (hi - f.step(t, x, up)) / (2.0 * h);
    up(i) = u(i);
  }
}

Dynamics pendulum_dynamics(const PendulumParams& params) {
  params.validate();
  Dynamics f;
  f.n = 4;
  f.m = 1;
  f.step = [params](Index, const VectorXd& x, const VectorXd& u) -> VectorXd {
    return pendulum_step(PendulumState(x), u(0), params);
  };
  f.jacobian = [params](Index, const VectorXd& x, const VectorXd& u, MatrixXd& fx, MatrixXd& fu) {
    const PendulumJacobian j = pendulum_step_jacobian(PendulumState(x), u(0), params);
    fx = j.A;
    fu = j.B;
  };
  return f;
}

void LinearGaussianDynamics::validate() const {
  const Index t_count = horizon();
  if (t_count < 1 || B.size() != A.size())
    throw Error(ErrorCode::kDimensionMismatch, "need one A and one B per step");
  if (!c.empty() && c.size() != A.size())
    throw Error(ErrorCode::kDimensionMismatch, "offsets must be empty or one per step");
  if (!noise.empty() && noise.size() != A.size())
    throw Error(ErrorCode::kDimensionMismatch, "noise must be empty or one per step");
  const Index nx = n(), nu = m();
  for (Index t = 0; t < t_count; ++t) {
    if (A[idx(t)].rows() != nx || A[idx(t)].cols() != nx || B[idx(t)].rows() != nx ||
        B[idx(t)].cols() != nu)
      throw Error(ErrorCode::kDimensionMismatch, "A_t, B_t sizes vary over time");
    if (!c.empty() && c[idx(t)].size() != nx)
      throw Error(ErrorCode::kDimensionMismatch, "offset size");
    if (!noise.empty() && (noise[idx(t)].rows() != nx || noise[idx(t)].cols() != nx))
      throw Error(ErrorCode::kDimensionMismatch, "noise covariance size");
  }
}

Dynamics LinearGaussianDynamics::as_dynamics() const {
  validate();
  Dynamics f;
  f.n = n();
  f.m = m();
  const LinearGaussianDynamics self = *this;
  f.step = [self](Index t, const VectorXd& x, const VectorXd& u) -> VectorXd {
    VectorXd next = self.A[idx(t)] * x + self.B[idx(t)] * u;
    if (!self.c.empty()) next += self.c[idx(t)];
    return next;
  };
  f.jacobian = [self](Index t, const VectorXd&, const VectorXd&, MatrixXd& fx, MatrixXd& fu) {
    fx = self.A[idx(t)];
    fu = self.B[idx(t)];
  };
  return f;
}

LinearGaussianDynamics linearize_along(const Dynamics& f, const MatrixXd& x, const MatrixXd& u) {
  const Index t_count = u.rows();
  if (x.rows() != t_count + 1)
    throw Error(ErrorCode::kDimensionMismatch, "need T + 1 states for T controls");
  LinearGaussianDynamics lin;
  lin.A.resize(idx(t_count));
  lin.B.resize(idx(t_count));
  lin.c.resize(idx(t_count));
  for (Index t = 0; t < t_count; ++t) {
    const VectorXd xt = x.row(t).transpose(), ut = u.row(t).transpose();
    linearize(f, t, xt, ut, lin.A[idx(t)], lin.B[idx(t)]);
    lin.c[idx(t)] = f.step(t, xt, ut) - lin.A[idx(t)] * xt - lin.B[idx(t)] * ut;
  }
  return lin;
}

VectorXd GaussianPolicy::mean(Index t, const VectorXd& x) const {
  VectorXd u = u_hat.row(t).transpose();
  if (!K.empty()) u += K[idx(t)] * (x - x_hat.row(t).transpose());
  return u;
}

// KL divergence ----------------------------------------------------------------

namespace {

// E_{s ~ N(mu, sigma)} KL(N(Fp s + fp, Sp) || N(Fq s + fq, Sq)).
double conditional_kl(const MatrixXd& fp_gain, const VectorXd& fp_off, const MatrixXd& sp,
                      const MatrixXd& fq_gain, const VectorXd& fq_off, const MatrixXd& sq,
                      const VectorXd& mu, const MatrixXd& sigma) {
  if (fp_gain == fq_gain && fp_off == fq_off && sp == sq) return 0.0;
  const Index d = sp.rows();
  const Eigen::LLT<MatrixXd> lq(sq);
  if (lq.info() != Eigen::Success)
    throw Error(ErrorCode::kSingularCovariance, "reference conditional covariance is not PD");
  const Eigen::LLT<MatrixXd> lp(sp);
  if (lp.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const MatrixXd d_gain = fp_gain - fq_gain;
  const VectorXd delta = d_gain * mu + fp_off - fq_off;
  const double logdet_q = 2.0 * lq.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_p = 2.0 * lp.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double trace = lq.solve(sp).trace();
  const double mahal = delta.dot(lq.solve(delta));
  const double spread = lq.solve(d_gain * sigma * d_gain.transpose()).trace();
  return 0.5 * (trace - static_cast<double>(d) + logdet_q - logdet_p + mahal + spread);
}

MatrixXd noise_at(const LinearGaussianDynamics& dyn, Index t) {
  return dyn.noise.empty() ? MatrixXd::Zero(dyn.n(), dyn.n()) : dyn.noise[idx(t)];
}

VectorXd offset_at(const LinearGaussianDynamics& dyn, Index t) {
  return dyn.c.empty() ? VectorXd::Zero(dyn.n()) : dyn.c[idx(t)];
}

void check_policy(const GaussianPolicy& pi, Index t_count, Index n, Index m) {
  if (pi.u_hat.rows() != t_count || pi.u_hat.cols() != m || pi.x_hat.rows() < t_count ||
      pi.x_hat.cols() != n || idx(t_count) != pi.cov.size() ||
      (!pi.K.empty() && pi.K.size() != idx(t_count)))
    throw Error(ErrorCode::kDimensionMismatch, "policy does not match the dynamics");
}

}  // namespace

double kl_traj(const TrajectoryDistribution& p, const TrajectoryDistribution& q) {
  p.dynamics.validate();
  q.dynamics.validate();
  const Index t_count = p.dynamics.horizon(), n = p.dynamics.n(), m = p.dynamics.m();
  if (q.dynamics.horizon() != t_count || q.dynamics.n() != n || q.dynamics.m() != m ||
      p.x0_mean.size() != n || q.x0_mean.size() != n)
    throw Error(ErrorCode::kDimensionMismatch, "trajectory distributions differ in shape");
  check_policy(p.policy, t_count, n, m);
  check_policy(q.policy, t_count, n, m);

  VectorXd mu_x = p.x0_mean;
  MatrixXd sig_x = or_zero(p.x0_cov, n);
  double kl = conditional_kl(MatrixXd::Zero(n, 1), p.x0_mean, sig_x, MatrixXd::Zero(n, 1),
                             q.x0_mean, or_zero(q.x0_cov, n), VectorXd::Zero(1),
                             MatrixXd::Zero(1, 1));
  for (Index t = 0; t < t_count; ++t) {
    const auto gain = [&](const GaussianPolicy& pi) -> MatrixXd {
      return pi.K.empty() ? MatrixXd::Zero(m, n) : pi.K[idx(t)];
    };
    const MatrixXd kp = gain(p.policy), kq = gain(q.policy);
    const VectorXd op = p.policy.u_hat.row(t).transpose() - kp * p.policy.x_hat.row(t).transpose();
    const VectorXd oq = q.policy.u_hat.row(t).transpose() - kq * q.policy.x_hat.row(t).transpose();
    kl += conditional_kl(kp, op, p.policy.cov[idx(t)], kq, oq, q.policy.cov[idx(t)], mu_x, sig_x);

    // Joint of s = [x; u] under p.
    VectorXd mu_s(n + m);
    mu_s << mu_x, kp * mu_x + op;
    MatrixXd sig_s(n + m, n + m);
    sig_s.topLeftCorner(n, n) = sig_x;
    sig_s.topRightCorner(n, m) = sig_x * kp.transpose();
    sig_s.bottomLeftCorner(m, n) = kp * sig_x;
    sig_s.bottomRightCorner(m, m) = kp * sig_x * kp.transpose() + p.policy.cov[idx(t)];

    MatrixXd fp(n, n + m), fq(n, n + m);
    fp << p.dynamics.A[idx(t)], p.dynamics.B[idx(t)];
    fq << q.dynamics.A[idx(t)], q.dynamics.B[idx(t)];
    const MatrixXd np = noise_at(p.dynamics, t);
    kl += conditional_kl(fp, offset_at(p.dynamics, t), np, fq, offset_at(q.dynamics, t),
                         noise_at(q.dynamics, t), mu_s, sig_s);

    mu_x = fp * mu_s + offset_at(p.dynamics, t);
    sig_x = fp * sig_s * fp.transpose() + np;
    sig_x = 0.5 * (sig_x + sig_x.transpose());
  }
  return kl;
}

// Backward pass ------------------------------------------------------------------

BackwardPass lqr_backward(const LinearGaussianDynamics& model, const QuadraticCost& cost,
                          const MatrixXd& x_hat, const MatrixXd& u_hat,
                          const BackwardOptions& options) {
  const Index t_count = u_hat.rows(), n = cost.n(), m = cost.m();
  if (model.horizon() != t_count || cost.horizon() != t_count || x_hat.rows() != t_count + 1)
    throw Error(ErrorCode::kDimensionMismatch, "model, cost and nominal horizons differ");
  if (model.n() != n || model.m() != m || x_hat.cols() != n || u_hat.cols() != m)
    throw Error(ErrorCode::kDimensionMismatch, "model, cost and nominal dimensions differ");

  BackwardPass bp;
  bp.K.resize(idx(t_count));
  bp.k.resize(idx(t_count));
  bp.q_uu.resize(idx(t_count));
  bp.v_x.resize(idx(t_count) + 1);
  bp.v_xx.resize(idx(t_count) + 1);
  if (cost.has_terminal()) {
    bp.v_x.back() = cost.terminal_s +
                    cost.terminal_ss * (x_hat.row(t_count).transpose() - cost.terminal_reference);
    bp.v_xx.back() = cost.terminal_ss;
  } else {
    bp.v_x.back() = VectorXd::Zero(n);
    bp.v_xx.back() = MatrixXd::Zero(n, n);
  }

  for (Index t = t_count - 1; t >= 0; --t) {
    const MatrixXd& fx = model.A[idx(t)];
    const MatrixXd& fu = model.B[idx(t)];
    const VectorXd& vx = bp.v_x[idx(t) + 1];
    const MatrixXd& vxx = bp.v_xx[idx(t) + 1];
    const VectorXd xt = x_hat.row(t).transpose(), ut = u_hat.row(t).transpose();
    const VectorXd g = cost.stage_gradient(t, xt, ut);
    const MatrixXd& h = cost.c_ss[idx(t)];

    const VectorXd qx = g.head(n) + fx.transpose() * vx;
    const VectorXd qu = g.tail(m) + fu.transpose() * vx;
    const MatrixXd vxx_fu = vxx * fu;
    const MatrixXd qxx = h.topLeftCorner(n, n) + fx.transpose() * vxx * fx;
    MatrixXd quu = h.bottomRightCorner(m, m) + fu.transpose() * vxx_fu;
    quu = 0.5 * (quu + quu.transpose());
    const MatrixXd qux = h.bottomLeftCorner(m, n) + vxx_fu.transpose() * fx;

    const MatrixXd quu_reg = quu + options.mu * MatrixXd::Identity(m, m);
    const Eigen::LLT<MatrixXd> llt(quu_reg);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::kNonPDQuu, "Q_uu is not positive definite at step " + std::to_string(t));

    VectorXd k = -llt.solve(qu);
    MatrixXd K = -llt.solve(qux);
    // Controls pinned at a bound get no feedback; the free ones are re-solved
    // on their own block.
    std::vector<Index> free;
    for (Index i = 0; i < m; ++i) {
      const bool at_lo = options.u_min && ut(i) <= (*options.u_min)(i);
      const bool at_hi = options.u_max && ut(i) >= (*options.u_max)(i);
      if (!at_lo && !at_hi) free.push_back(i);
    }
    if (static_cast<Index>(free.size()) < m) {
      K.setZero();
      if (!free.empty()) {
        const Eigen::LLT<MatrixXd> lf(quu_reg(free, free));
        K(free, Eigen::all) = -lf.solve(qux(free, Eigen::all));
      }
    }

    VectorXd vx_t = qx + K.transpose() * (quu * k) + K.transpose() * qu + qux.transpose() * k;
    MatrixXd vxx_t = qxx + K.transpose() * quu * K + K.transpose() * qux + qux.transpose() * K;
    bp.v_x[idx(t)] = std::move(vx_t);
    bp.v_xx[idx(t)] = 0.5 * (vxx_t + vxx_t.transpose());
    bp.dv1 += k.dot(qu);
    bp.dv2 += 0.5 * k.dot(quu * k);
    bp.k[idx(t)] = std::move(k);
    bp.K[idx(t)] = std::move(K);
    bp.q_uu[idx(t)] = quu_reg;
  }
  return bp;
}

// iLQR -----------------------------------------------------------------------------

namespace {

void forward(const Dynamics& f, const VectorXd& x0, const MatrixXd& x_hat, const MatrixXd& u_hat,
             const BackwardPass* bp, double alpha, const std::optional<VectorXd>& u_min,
             const std::optional<VectorXd>& u_max, MatrixXd& x, MatrixXd& u) {
  const Index t_count = u_hat.rows();
  x.resize(t_count + 1, x0.size());
  u.resize(t_count, u_hat.cols());
  x.row(0) = x0.transpose();
  for (Index t = 0; t < t_count; ++t) {
    VectorXd ut = u_hat.row(t).transpose();
    if (bp) {
      ut += alpha * bp->k[idx(t)] + bp->K[idx(t)] * (x.row(t) - x_hat.row(t)).transpose();
      ut = clamp(std::move(ut), u_min, u_max);
    }
    u.row(t) = ut.transpose();
    x.row(t + 1) = f.step(t, x.row(t).transpose(), ut).transpose();
  }
}

BackwardPass regularized_backward(const Dynamics& f, const QuadraticCost& cost, const MatrixXd& x,
                                  const MatrixXd& u, const ILQROptions& opts, double& mu) {
  const LinearGaussianDynamics lin = linearize_along(f, x, u);
  BackwardOptions bo;
  bo.u_min = opts.u_min;
  bo.u_max = opts.u_max;
  while (true) {
    bo.mu = mu;
    try {
      return lqr_backward(lin, cost, x, u, bo);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonPDQuu) throw;
      mu = std::max(1e-6, 10.0 * mu);
      if (mu > opts.mu_max) throw;
    }
  }
}

ILQRSolution solve_unconstrained(const Dynamics& f, const QuadraticCost& cost, const VectorXd& x0,
                                 const MatrixXd& u_init, const ILQROptions& opts) {
  ILQRSolution sol;
  forward(f, x0, MatrixXd(), u_init, nullptr, 0.0, opts.u_min, opts.u_max, sol.x, sol.u);
  double j = cost.total(sol.x, sol.u);
  if (!std::isfinite(j)) throw Error(ErrorCode::kInvalidArgument, "initial rollout cost is not finite");
  sol.cost_trace.push_back(j);

  double mu = 0.0;
  bool finish = false;
  BackwardPass bp;
  MatrixXd xn, un;
  while (true) {
    bp = regularized_backward(f, cost, sol.x, sol.u, opts, mu);
    if (finish) break;
    const double predicted = -(bp.dv1 + bp.dv2);
    if (predicted <= opts.tolerance * std::abs(j)) {
      sol.status = ILQRStatus::kConverged;
      break;
    }
    if (sol.iterations >= opts.max_iterations) {
      sol.status = ILQRStatus::kMaxIterations;
      break;
    }
    bool accepted = false;
    double alpha = 1.0;
    double jn = j;
    for (int b = 0; b <= opts.max_backtracks; ++b, alpha *= 0.5) {
      forward(f, x0, sol.x, sol.u, &bp, alpha, opts.u_min, opts.u_max, xn, un);
      jn = cost.total(xn, un);
      if (std::isfinite(jn) && jn < j) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      mu = std::max(1e-6, 10.0 * mu);
      if (mu > opts.mu_max) {
        sol.status = ILQRStatus::kLineSearchFailed;
        break;
      }
      continue;
    }
    const double rel = (j - jn) / std::max(std::abs(j), std::numeric_limits<double>::min());
    sol.x.swap(xn);
    sol.u.swap(un);
    j = jn;
    sol.cost_trace.push_back(j);
    ++sol.iterations;
    mu = mu / 10.0 < 1e-6 ? 0.0 : mu / 10.0;
    if (rel < opts.tolerance) {
      sol.status = ILQRStatus::kConverged;
      finish = true;
    }
  }
  sol.converged = sol.status == ILQRStatus::kConverged;
  sol.k = std::move(bp.k);
  sol.K = std::move(bp.K);
  sol.q_uu = std::move(bp.q_uu);
  sol.v_x = std::move(bp.v_x);
  sol.v_xx = std::move(bp.v_xx);
  sol.cov = exploration_covariances(sol.q_uu);
  sol.cost = j;
  return sol;
}

// (c + nu (-log p_prev(u | x))) / (1 + nu), constants dropped. The maximum
// entropy solution of this cost is the Lagrangian solution of the KL-limited
// problem with multiplier nu.
QuadraticCost kl_penalized(const QuadraticCost& cost, const GaussianPolicy& prev,
                           const std::vector<MatrixXd>& prev_precision, double nu) {
  const Index n = cost.n(), m = cost.m();
  QuadraticCost out = cost;
  const double scale = 1.0 / (1.0 + nu);
  for (Index t = 0; t < cost.horizon(); ++t) {
    MatrixXd map(m, n + m);
    const MatrixXd gain = prev.K.empty() ? MatrixXd::Zero(m, n) : prev.K[idx(t)];
    map << -gain, MatrixXd::Identity(m, m);
    const VectorXd r = prev.u_hat.row(t).transpose() - gain * prev.x_hat.row(t).transpose();
    const MatrixXd& w = prev_precision[idx(t)];
    const MatrixXd& h = cost.c_ss[idx(t)];
    MatrixXd hn = h + nu * map.transpose() * w * map;
    out.c_ss[idx(t)] = scale * 0.5 * (hn + hn.transpose());
    out.c_s[idx(t)] =
        scale * (cost.c_s[idx(t)] - h * cost.reference[idx(t)] - nu * map.transpose() * (w * r));
    out.reference[idx(t)] = VectorXd::Zero(n + m);
  }
  if (cost.has_terminal()) {
    out.terminal_ss = scale * cost.terminal_ss;
    out.terminal_s = scale * cost.terminal_s;
  }
  return out;
}

}  // namespace

ILQRSolution ilqr(const Dynamics& f, const QuadraticCost& cost, const VectorXd& x0,
                  const MatrixXd& u_init, const ILQROptions& options) {
  cost.validate();
  const Index t_count = u_init.rows();
  if (t_count < 2) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 2");
  if (cost.horizon() != t_count || cost.n() != f.n || cost.m() != f.m || u_init.cols() != f.m ||
      x0.size() != f.n)
    throw Error(ErrorCode::kDimensionMismatch, "dynamics, cost, x0 and u_init disagree");
  if (!f.step) throw Error(ErrorCode::kInvalidArgument, "dynamics has no step function");
  for (Index t = 0; t < t_count; ++t) {
    const VectorXd ut = u_init.row(t).transpose();
    if ((options.u_min && (ut.array() < options.u_min->array()).any()) ||
        (options.u_max && (ut.array() > options.u_max->array()).any()))
      throw Error(ErrorCode::kInvalidArgument, "u_init violates the control bounds");
  }
  if (options.max_iterations < 0 || options.tolerance < 0.0)
    throw Error(ErrorCode::kInvalidArgument, "bad iteration limits");

  if (!options.kl) return solve_unconstrained(f, cost, x0, u_init, options);

  const KLConstraint& con = *options.kl;
  check_policy(con.previous, t_count, f.n, f.m);
  if (con.epsilon <= 0.0 || con.max_dual_steps < 1)
    throw Error(ErrorCode::kInvalidArgument, "KL limit must be positive");
  std::vector<MatrixXd> precision(idx(t_count));
  for (Index t = 0; t < t_count; ++t) {
    const Eigen::LLT<MatrixXd> llt(con.previous.cov[idx(t)]);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::kSingularCovariance, "previous policy covariance is not PD");
    precision[idx(t)] = llt.solve(MatrixXd::Identity(f.m, f.m));
  }
  ILQROptions inner = options;
  inner.kl.reset();

  TrajectoryDistribution prev_dist;
  prev_dist.policy = con.previous;
  prev_dist.x0_mean = x0;
  prev_dist.x0_cov = con.x0_cov;

  const auto attempt = [&](double nu) {
    ILQRSolution sol = solve_unconstrained(f, kl_penalized(cost, con.previous, precision, nu), x0,
                                           u_init, inner);
    TrajectoryDistribution p;
    p.dynamics = linearize_along(f, sol.x, sol.u);
    if (!con.process_noise.empty()) p.dynamics.noise = con.process_noise;
    p.policy = exploration_policy(sol);
    p.x0_mean = x0;
    p.x0_cov = con.x0_cov;
    TrajectoryDistribution q = prev_dist;
    q.dynamics = p.dynamics;
    sol.kl = kl_traj(p, q);
    sol.kl_multiplier = nu;
    sol.cost = cost.total(sol.x, sol.u);
    return sol;
  };

  // Log-space bracketing of the smallest multiplier meeting the limit.
  // Clamped controls can keep the KL above the limit for every multiplier;
  // the attempt closest to it is returned then.
  const double limit = 1.1 * con.epsilon;
  ILQRSolution closest = attempt(0.0);
  if (closest.kl <= limit) return closest;
  double lo = 0.0;
  std::optional<double> hi;
  std::optional<ILQRSolution> best;
  for (int step = 1; step < con.max_dual_steps; ++step) {
    double nu;
    if (!hi)
      nu = lo == 0.0 ? 1.0 : 10.0 * lo;
    else
      nu = lo == 0.0 ? *hi / 10.0 : std::sqrt(lo * *hi);
    ILQRSolution trial = attempt(nu);
    if (trial.kl <= limit) {
      hi = nu;
      best = std::move(trial);
    } else {
      lo = nu;
      if (trial.kl < closest.kl) closest = std::move(trial);
    }
  }
  return best ? std::move(*best) : closest;
}

std::vector<MatrixXd> exploration_covariances(const std::vector<MatrixXd>& q_uu) {
  std::vector<MatrixXd> out;
  out.reserve(q_uu.size());
  for (const MatrixXd& q : q_uu) {
    const Index m = q.rows();
    const MatrixXd qs = 0.5 * (q + q.transpose());
    const Eigen::LLT<MatrixXd> llt(qs);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::kNonPDQuu, "Q_uu is not positive definite");
    MatrixXd sigma = llt.solve(MatrixXd::Identity(m, m));
    sigma = 0.5 * (sigma + sigma.transpose());
    double jitter = 0.0;
    while (Eigen::LLT<MatrixXd>(sigma + jitter * MatrixXd::Identity(m, m)).info() != Eigen::Success)
      jitter = jitter == 0.0 ? 1e-12 * std::max(sigma.trace() / static_cast<double>(m), 1e-300)
                             : 10.0 * jitter;
    out.push_back(sigma + jitter * MatrixXd::Identity(m, m));
  }
  return out;
}

GaussianPolicy exploration_policy(const ILQRSolution& sol) {
  GaussianPolicy pi;
  pi.x_hat = sol.x;
  pi.u_hat = sol.u;
  pi.K = sol.K;
  pi.cov = sol.cov.empty() ? exploration_covariances(sol.q_uu) : sol.cov;
  return pi;
}

void rollout(const Dynamics& f, const GaussianPolicy& policy, const VectorXd& x0,
             const MatrixXd& noise, const std::optional<VectorXd>& u_min,
             const std::optional<VectorXd>& u_max, MatrixXd& x, MatrixXd& u) {
  const Index t_count = policy.horizon();
  if (noise.size() > 0 && (noise.rows() != t_count || noise.cols() != f.m))
    throw Error(ErrorCode::kDimensionMismatch, "noise must be T x m");
  x.resize(t_count + 1, f.n);
  u.resize(t_count, f.m);
  x.row(0) = x0.transpose();
  for (Index t = 0; t < t_count; ++t) {
    VectorXd ut = policy.mean(t, x.row(t).transpose());
    if (noise.size() > 0) ut += noise.row(t).transpose();
    ut = clamp(std::move(ut), u_min, u_max);
    u.row(t) = ut.transpose();
    x.row(t + 1) = f.step(t, x.row(t).transpose(), ut).transpose();
  }
}

// Reinforcement learning -------------------------------------------------------------

RLModel parse_rl_model(const std::string& name) {
  if (name == "truth") return RLModel::kTruth;
  if (name == "ltv") return RLModel::kLTV;
  if (name == "ltv_prior") return RLModel::kLTVPrior;
  if (name == "lti") return RLModel::kLTI;
  throw Error(ErrorCode::kInvalidArgument, "unknown model '" + name + "'");
}

namespace {

// Fits x_{t+1} = A_t x_t + B_t u_t + c_t on one rollout.
LinearGaussianDynamics fit_rollout_model(RLModel model, const MatrixXd& x, const MatrixXd& u,
                                         const RLOptions& options) {
  const Index t_count = u.rows(), n = x.cols(), m = u.cols();
  // A constant input carries the offset; the unused last row closes the record.
  MatrixXd u_aug = MatrixXd::Zero(t_count + 1, m + 1);
  u_aug.topLeftCorner(t_count, m) = u;
  u_aug.col(m).setOnes();
  const Trajectory traj(x, u_aug);

  LinearGaussianDynamics dyn;
  dyn.A.resize(idx(t_count));
  dyn.B.resize(idx(t_count));
  dyn.c.resize(idx(t_count));
  dyn.noise.resize(idx(t_count));
  if (model == RLModel::kLTI) {
    const LTIModel lti = fit_lti(traj);
    for (Index t = 0; t < t_count; ++t) {
      dyn.A[idx(t)] = lti.A;
      dyn.B[idx(t)] = lti.B.leftCols(m);
      dyn.c[idx(t)] = lti.B.col(m);
      dyn.noise[idx(t)] = 1e-4 * MatrixXd::Identity(n, n);
    }
    return dyn;
  }
  FitL2Options fo;
  if (model == RLModel::kLTVPrior) {
    if (!options.prior) throw Error(ErrorCode::kInvalidArgument, "ltv_prior needs a prior function");
    fo.prior = options.prior;
  }
  const LTVModel ltv = fit_l2(traj, options.ltv_lambda, ParameterEvolution::random_walk(), fo);
  const double s2 = ltv_prediction_sos(traj, ltv) / static_cast<double>(n * t_count);
  for (Index t = 0; t < t_count; ++t) {
    dyn.A[idx(t)] = ltv.A[idx(t)];
    dyn.B[idx(t)] = ltv.B[idx(t)].leftCols(m);
    dyn.c[idx(t)] = ltv.B[idx(t)].col(m);
    const MatrixXd c_t = traj.observation_matrix(t);
    MatrixXd sf = s2 * c_t * (*ltv.param_covs)[idx(t)] * c_t.transpose();
    dyn.noise[idx(t)] = 0.5 * (sf + sf.transpose());
  }
  return dyn;
}

MatrixXd exploration_noise(const GaussianPolicy& policy, RandomStream& rng) {
  const Index t_count = policy.horizon(), m = policy.u_hat.cols();
  MatrixXd noise(t_count, m);
  for (Index t = 0; t < t_count; ++t) {
    const Eigen::LLT<MatrixXd> llt(policy.cov[idx(t)]);
    noise.row(t) = (llt.matrixL() * rng.normal_vector(m)).transpose();
  }
  return noise;
}

}  // namespace

RLResult rl_loop(const Dynamics& env, RLModel model, const QuadraticCost& cost,
                 const VectorXd& x0, const MatrixXd& u_init, const RLOptions& options) {
  if (options.iterations < 1) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 1");
  if (options.initial_exploration && *options.initial_exploration <= 0.0)
    throw Error(ErrorCode::kInvalidArgument, "initial exploration must be positive");
  cost.validate();
  const Index t_count = u_init.rows(), m = env.m;
  ILQROptions plain = options.ilqr;
  plain.kl.reset();

  RLResult result;
  GaussianPolicy policy;
  policy.u_hat = u_init;
  for (Index t = 0; t < t_count; ++t) {
    if (options.initial_exploration) {
      policy.cov.push_back(*options.initial_exploration * MatrixXd::Identity(m, m));
      continue;
    }
    // Maximum-entropy policy of the control cost alone.
    const MatrixXd c_uu = cost.c_ss[idx(t)].bottomRightCorner(m, m);
    const Eigen::LLT<MatrixXd> llt(c_uu);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::kInvalidArgument,
                  "control cost is not PD; set an initial exploration covariance");
    policy.cov.push_back(llt.solve(MatrixXd::Identity(m, m)));
  }
  MatrixXd x, u;
  rollout(env, policy, x0, MatrixXd(), plain.u_min, plain.u_max, x, u);
  policy.x_hat = x;
  policy.K.assign(idx(t_count), MatrixXd::Zero(m, env.n));

  for (int it = 0; it < options.iterations; ++it) {
    if (model == RLModel::kTruth) {
      result.last = ilqr(env, cost, x0, policy.u_hat, plain);
    } else {
      RandomStream rng(options.seed, static_cast<std::uint64_t>(it));
      rollout(env, policy, x0, exploration_noise(policy, rng), plain.u_min, plain.u_max, x, u);
      const LinearGaussianDynamics fitted = fit_rollout_model(model, x, u, options);
      ILQROptions io = plain;
      KLConstraint con;
      con.previous = policy;
      con.epsilon = options.kl_epsilon;
      con.process_noise = fitted.noise;
      io.kl = con;
      result.last = ilqr(fitted.as_dynamics(), cost, x0, policy.u_hat, io);
    }
    policy = exploration_policy(result.last);
    rollout(env, policy, x0, MatrixXd(), plain.u_min, plain.u_max, x, u);
    result.cost_trace.push_back(cost.total(x, u));
    result.kl_trace.push_back(result.last.kl);
  }
  result.policy = policy;
  return result;
}

PendulumTask pendulum_damping_task(Index horizon, const PendulumParams& params) {
  PendulumTask task;
  task.env = pendulum_dynamics(params);
  const Eigen::Vector4d q(1.0, 0.1, 0.1, 0.1);
  task.cost = QuadraticCost::tracking(q.asDiagonal(), MatrixXd::Constant(1, 1, 0.01), horizon,
                                      VectorXd::Zero(4), VectorXd::Zero(1));
  task.x0 = Eigen::Vector4d(std::numbers::pi - 0.1, 0.0, 0.0, 0.0);
  task.u_init = MatrixXd::Zero(horizon, 1);
  task.u_min = VectorXd::Constant(1, -10.0);
  task.u_max = VectorXd::Constant(1, 10.0);
  return task;
}

}  // namespace sysid
