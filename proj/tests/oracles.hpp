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

// Independent reference solvers shared by the unit and acceptance tests.
// None of these call into the solvers they are used to check.

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "sysid/least_squares.hpp"

namespace sysid::oracle {

// Objective 0.5 ||y - A k||^2 + lambda sum_g ||(D k)_g||_2 with dense data.
inline double group_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                              const Eigen::MatrixXd& d,
                              const std::vector<std::vector<Eigen::Index>>& groups,
                              double lambda, const Eigen::VectorXd& k) {
  const Eigen::VectorXd dk = d * k;
  double pen = 0.0;
  for (const auto& g : groups) {
    double sq = 0.0;
    for (Eigen::Index i : g) sq += dk(i) * dk(i);
    pen += std::sqrt(sq);
  }
  return 0.5 * (y - a * k).squaredNorm() + lambda * pen;
}

// Global minimum of the group objective by enumerating which groups of D k
// may be nonzero. For each pattern the groups outside it are pinned to zero by
// restricting k to the null space of their rows; what remains is smooth where
// the active groups are nonzero and is minimized by damped Newton. The true
// optimum's own pattern reproduces it, and every other pattern yields a
// feasible point, so the minimum over patterns is the optimum.
inline double group_lasso_enumeration(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                      const Eigen::MatrixXd& d,
                                      const std::vector<std::vector<Eigen::Index>>& groups,
                                      double lambda, Eigen::VectorXd* argmin = nullptr) {
  const std::size_t num_groups = groups.size();
  const Eigen::Index k_dim = a.cols();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < (std::size_t{1} << num_groups); ++mask) {
    // Rows of D forced to zero.
    std::vector<Eigen::Index> pinned;
    for (std::size_t g = 0; g < num_groups; ++g)
      if (!(mask & (std::size_t{1} << g)))
        for (Eigen::Index i : groups[g]) pinned.push_back(i);
    Eigen::MatrixXd basis;
    if (pinned.empty()) {
      basis = Eigen::MatrixXd::Identity(k_dim, k_dim);
    } else {
      Eigen::MatrixXd c(static_cast<Eigen::Index>(pinned.size()), k_dim);
      for (std::size_t r = 0; r < pinned.size(); ++r) c.row(r) = d.row(pinned[r]);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
      lu.setThreshold(1e-12);
      basis = lu.kernel();
      if (lu.rank() == k_dim) basis = Eigen::MatrixXd::Zero(k_dim, 0);
    }
    if (basis.cols() == 0) {
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(k_dim);
      const double f = group_objective(a, y, d, groups, lambda, zero);
      if (f < best) {
        best = f;
        if (argmin) *argmin = zero;
      }
      continue;
    }
    const Eigen::MatrixXd an = a * basis;
    const Eigen::MatrixXd dn = d * basis;
    auto f_of = [&](const Eigen::VectorXd& th) {
      return group_objective(a, y, d, groups, lambda, basis * th);
    };
    Eigen::MatrixXd gram = an.transpose() * an;
    Eigen::VectorXd theta = (gram + 1e-12 * Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))
                                .ldlt()
                                .solve(an.transpose() * y);
    for (int it = 0; it < 200; ++it) {
      Eigen::VectorXd grad = an.transpose() * (an * theta - y);
      Eigen::MatrixXd hess = gram;
      const Eigen::VectorXd dk = dn * theta;
      for (std::size_t g = 0; g < num_groups; ++g) {
        if (!(mask & (std::size_t{1} << g))) continue;
        const auto& idx = groups[g];
        Eigen::MatrixXd dg(static_cast<Eigen::Index>(idx.size()), dn.cols());
        Eigen::VectorXd w(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) {
          dg.row(r) = dn.row(idx[r]);
          w(r) = dk(idx[r]);
        }
        const double norm = std::sqrt(w.squaredNorm() + 1e-30);
        const Eigen::VectorXd wh = w / norm;
        grad += lambda * dg.transpose() * wh;
        const Eigen::MatrixXd curv =
            (Eigen::MatrixXd::Identity(w.size(), w.size()) - wh * wh.transpose()) / norm;
        hess += lambda * dg.transpose() * curv * dg;
      }
      const Eigen::VectorXd step = hess.ldlt().solve(grad);
      const double f0 = f_of(theta);
      double t = 1.0;
      bool moved = false;
      while (t > 1e-12) {
        const Eigen::VectorXd cand = theta - t * step;
        if (f_of(cand) < f0) {
          theta = cand;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved || step.norm() < 1e-15 * (1.0 + theta.norm())) break;
    }
    const double f = f_of(theta);
    if (f < best) {
      best = f;
      if (argmin) *argmin = basis * theta;
    }
  }
  return best;
}

// KL(N(mp, sp) || N(mq, sq)) from dense Cholesky factors.
inline double gaussian_kl(const Eigen::VectorXd& mp, const Eigen::MatrixXd& sp,
                          const Eigen::VectorXd& mq, const Eigen::MatrixXd& sq) {
  const Eigen::LLT<Eigen::MatrixXd> lp(sp), lq(sq);
  const auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
    return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const Eigen::VectorXd d = mq - mp;
  return 0.5 * (lq.solve(sp).trace() - static_cast<double>(mp.size()) + d.dot(lq.solve(d)) +
                logdet(lq) - logdet(lp));
}

// Optimal controls of a linear-quadratic problem solved as one dense
// quadratic program in the stacked controls. Dynamics x+ = A_t x + B_t u +
// c_t; stage cost d^T g_t + 0.5 d^T H_t d with d = [x; u] - r_t; terminal
// cost 0.5 (x - xf)^T Hf (x - xf) (Hf may be empty). Returns T x m controls.
inline Eigen::MatrixXd lq_dense(const std::vector<Eigen::MatrixXd>& a,
                                const std::vector<Eigen::MatrixXd>& b,
                                const std::vector<Eigen::VectorXd>& c,
                                const std::vector<Eigen::MatrixXd>& h,
                                const std::vector<Eigen::VectorXd>& g,
                                const std::vector<Eigen::VectorXd>& r, const Eigen::MatrixXd& hf,
                                const Eigen::VectorXd& xf, const Eigen::VectorXd& x0) {
  const std::size_t steps = a.size();
  const Eigen::Index n = x0.size(), m = b.front().cols();
  const Eigen::Index nu = static_cast<Eigen::Index>(steps) * m;
  // x_t = Phi_t U + psi_t.
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, nu);
  Eigen::VectorXd psi = x0;
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(nu, nu);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(nu);
  for (std::size_t t = 0; t < steps; ++t) {
    // s_t = [x_t; u_t] = S U + sigma.
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(n + m, nu);
    sel.topRows(n) = phi;
    sel.block(n, static_cast<Eigen::Index>(t) * m, m, m).setIdentity();
    Eigen::VectorXd off(n + m);
    off << psi, Eigen::VectorXd::Zero(m);
    hess += sel.transpose() * h[t] * sel;
    grad += sel.transpose() * (g[t] + h[t] * (off - r[t]));
    Eigen::MatrixXd next_phi = a[t] * phi;
    next_phi.block(0, static_cast<Eigen::Index>(t) * m, n, m) += b[t];
    psi = a[t] * psi + c[t];
    phi = next_phi;
  }
  if (hf.size() > 0) {
    hess += phi.transpose() * hf * phi;
    grad += phi.transpose() * hf * (psi - xf);
  }
  const Eigen::VectorXd u = -hess.ldlt().solve(grad);
  return Eigen::Map<const Eigen::MatrixXd>(u.data(), m, static_cast<Eigen::Index>(steps)).transpose();
}

// Block-diagonal regressor diag(C_0, ..., C_{T'-1}).
inline Eigen::MatrixXd ltv_dense_regressor(const Trajectory& traj) {
  const Eigen::Index n = traj.n(), k = traj.num_params(), steps = traj.steps();
  const Eigen::MatrixXd z = traj.regressors(0, steps);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(steps * n, steps * k);
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index i = 0; i < n; ++i) a.block(t * n + i, t * k + i * z.cols(), 1, z.cols()) = z.row(t);
  return a;
}

inline Eigen::VectorXd ltv_dense_targets(const Trajectory& traj) {
  const Eigen::MatrixXd y = traj.x().bottomRows(traj.steps()).transpose();
  return Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
}

// Rows sum_i p_i k_{r+i} for every r with r + degree inside the horizon.
inline Eigen::MatrixXd ltv_dense_difference(Eigen::Index steps, const std::vector<double>& poly, Eigen::Index k) {
  const Eigen::Index d = static_cast<Eigen::Index>(poly.size()) - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero((steps - d) * k, steps * k);
  for (Eigen::Index r = 0; r + d < steps; ++r)
    for (Eigen::Index i = 0; i <= d; ++i)
      out.block(r * k, (r + i) * k, k, k) = poly[static_cast<std::size_t>(i)] * Eigen::MatrixXd::Identity(k, k);
  return out;
}

// Ridge-regularized LTI cost of one segment from explicit normal equations.
inline double segment_cost(const Trajectory& traj, Eigen::Index first, Eigen::Index count, double ridge) {
  const Eigen::MatrixXd z = traj.regressors(first, count);
  const Eigen::MatrixXd y = traj.x().middleRows(first + 1, count);
  const Eigen::MatrixXd g = z.transpose() * z + ridge * Eigen::MatrixXd::Identity(z.cols(), z.cols());
  const Eigen::MatrixXd w = g.fullPivLu().solve(z.transpose() * y);
  return (y - z * w).squaredNorm() + ridge * w.squaredNorm();
}

}  // namespace sysid::oracle
