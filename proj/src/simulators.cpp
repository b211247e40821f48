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

#include "sysid/simulators.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "sysid/error.hpp"
#include "sysid/random.hpp"

namespace sysid {
namespace {

// Stream ids, one per independent source of randomness.
enum Stream : std::uint64_t {
  kStableA = 1,
  kStableB,
  kJumpInput,
  kJumpProcess,
  kJumpMeasurement,
  kDriftInput,
  kDriftProcess,
  kDriftParams,
};

Eigen::Matrix4d derivative_jacobian(const PendulumState& x, double u, const PendulumParams& p) {
  const double s = std::sin(x(0)), c = std::cos(x(0));
  Eigen::Matrix4d j = Eigen::Matrix4d::Zero();
  j(0, 1) = 1.0;
  j(1, 0) = -(p.g / p.l) * c - (u / p.l) * s;
  j(1, 1) = -p.d;
  j(2, 3) = 1.0;
  return j;
}

Eigen::Vector4d derivative_input(const PendulumState& x, const PendulumParams& p) {
  return Eigen::Vector4d(0.0, std::cos(x(0)) / p.l, 0.0, 1.0);
}

void check_noise(double sigma, const char* name) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be finite and >= 0");
}

}  // namespace

void PendulumParams::validate() const {
  if (!(l > 0.0)) throw Error(ErrorCode::kInvalidArgument, "pendulum length must be positive");
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "time step must be positive");
  if (!(d >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "damping must be nonnegative");
  if (!std::isfinite(g)) throw Error(ErrorCode::kInvalidArgument, "gravity must be finite");
}

PendulumState pendulum_derivative(const PendulumState& x, double u, const PendulumParams& p) {
  return PendulumState(x(1), -(p.g / p.l) * std::sin(x(0)) + (u / p.l) * std::cos(x(0)) - p.d * x(1),
                       x(3), u);
}

PendulumState pendulum_step(const PendulumState& x, double u, const PendulumParams& p) {
  const double h = p.dt;
  const PendulumState k1 = pendulum_derivative(x, u, p);
  const PendulumState k2 = pendulum_derivative(x + 0.5 * h * k1, u, p);
  const PendulumState k3 = pendulum_derivative(x + 0.5 * h * k2, u, p);
  const PendulumState k4 = pendulum_derivative(x + h * k3, u, p);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

PendulumJacobian pendulum_step_jacobian(const PendulumState& x, double u,
                                        const PendulumParams& p) {
  const double h = p.dt;
  const Eigen::Matrix4d eye = Eigen::Matrix4d::Identity();
  const PendulumState k1 = pendulum_derivative(x, u, p);
  const PendulumState x2 = x + 0.5 * h * k1;
  const PendulumState k2 = pendulum_derivative(x2, u, p);
  const PendulumState x3 = x + 0.5 * h * k2;
  const PendulumState k3 = pendulum_derivative(x3, u, p);
  const PendulumState x4 = x + h * k3;

  // Stage derivatives: dk_i = F_x(x_i) dx_i + F_u(x_i) du.
  const Eigen::Matrix4d f1 = derivative_jacobian(x, u, p), f2 = derivative_jacobian(x2, u, p),
                        f3 = derivative_jacobian(x3, u, p), f4 = derivative_jacobian(x4, u, p);
  const Eigen::Vector4d g1 = derivative_input(x, p), g2 = derivative_input(x2, p),
                        g3 = derivative_input(x3, p), g4 = derivative_input(x4, p);
  const Eigen::Matrix4d a1 = f1;
  const Eigen::Matrix4d a2 = f2 * (eye + 0.5 * h * a1);
  const Eigen::Matrix4d a3 = f3 * (eye + 0.5 * h * a2);
  const Eigen::Matrix4d a4 = f4 * (eye + h * a3);
  const Eigen::Vector4d b1 = g1;
  const Eigen::Vector4d b2 = f2 * (0.5 * h * b1) + g2;
  const Eigen::Vector4d b3 = f3 * (0.5 * h * b2) + g3;
  const Eigen::Vector4d b4 = f4 * (h * b3) + g4;
  PendulumJacobian jac;
  jac.A = eye + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  jac.B = (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
  return jac;
}

double pendulum_energy(const PendulumState& x, const PendulumParams& p) {
  return 0.5 * x(1) * x(1) - (p.g / p.l) * std::cos(x(0));
}

LTIModel random_stable_linear(Eigen::Index n, double dt, std::uint64_t seed, Eigen::Index m) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "state dimension must be at least 1");
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
  if (m < 0) m = n;
  RandomStream ra(seed, kStableA), rb(seed, kStableB);
  const Eigen::MatrixXd a0 = ra.normal_matrix(n, n);
  const Eigen::MatrixXd cont =
      a0 - a0.transpose() - dt * Eigen::MatrixXd::Identity(n, n);
  LTIModel model;
  model.A = (dt * cont).exp();
  model.B = rb.normal_matrix(n, m);
  return model;
}

JumpLinearData gen_jump_linear(const JumpLinearSpec& spec) {
  if (spec.length < 2) throw Error(ErrorCode::kInvalidArgument, "length must be at least 2");
  check_noise(spec.sigma_e, "sigma_e");
  check_noise(spec.sigma_v, "sigma_v");
  if (spec.switch_step < 1 || spec.switch_step >= spec.length - 1)
    throw Error(ErrorCode::kInvalidArgument, "switch step must fall inside the record");

  LTIModel m1, m2;
  m1.A.resize(2, 2);
  m1.A << 0.95, 0.1, 0.0, 0.95;
  m2.A.resize(2, 2);
  m2.A << 0.5, 0.05, 0.0, 0.5;
  m1.B.resize(2, 1);
  m1.B << 0.2, 1.0;
  m2.B = m1.B;

  const Eigen::Index length = spec.length;
  RandomStream input(spec.seed, kJumpInput), process(spec.seed, kJumpProcess),
      meas(spec.seed, kJumpMeasurement);
  Eigen::MatrixXd x(length, 2), u(length, 1);
  Eigen::MatrixXd params(length - 1, 6);
  const Eigen::VectorXd k1 = params_from_matrices(m1.A, m1.B);
  const Eigen::VectorXd k2 = params_from_matrices(m2.A, m2.B);
  // The measurement y_t = x_{t+1} + e_t is the state the next step starts
  // from, so e_t enters as equation error and the regressors stay exact.
  Eigen::Vector2d state = Eigen::Vector2d::Zero();
  for (Eigen::Index t = 0; t < length; ++t) {
    x.row(t) = state.transpose();
    u(t, 0) = input.normal();
    if (t + 1 < length) {
      const LTIModel& model = t < spec.switch_step ? m1 : m2;
      params.row(t) = (t < spec.switch_step ? k1 : k2).transpose();
      const Eigen::Vector2d v(process.normal(), process.normal());
      const Eigen::Vector2d e(meas.normal(), meas.normal());
      state = model.A * state + model.B * u(t, 0) + spec.sigma_v * v + spec.sigma_e * e;
    }
  }
  return JumpLinearData{Trajectory(x, u), {spec.switch_step}, {m1, m2}, params};
}

DriftingLTVData gen_drifting_ltv(const DriftingLTVSpec& spec) {
  if (spec.length < 2) throw Error(ErrorCode::kInvalidArgument, "length must be at least 2");
  if (spec.n < 1 || spec.m < 0) throw Error(ErrorCode::kInvalidArgument, "bad dimensions");
  check_noise(spec.sigma_v, "sigma_v");
  check_noise(spec.sigma_w, "sigma_w");
  const Eigen::Index n = spec.n, m = spec.m, length = spec.length;
  const LTIModel init = random_stable_linear(n, spec.dt, spec.seed, m);
  Eigen::VectorXd k = params_from_matrices(init.A, init.B);
  const Eigen::Index num = k.size();

  RandomStream input(spec.seed, kDriftInput), process(spec.seed, kDriftProcess),
      drift(spec.seed, kDriftParams);
  Eigen::MatrixXd x(length, n), u(length, m), params(length - 1, num);
  Eigen::VectorXd state = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = 0; t < length; ++t) {
    x.row(t) = state.transpose();
    for (Eigen::Index j = 0; j < m; ++j) u(t, j) = input.normal();
    if (t + 1 < length) {
      if (t > 0) k += spec.sigma_w * drift.normal_vector(num);
      params.row(t) = k.transpose();
      const LTIModel model = matrices_from_params(k, n, m);
      state = model.predict(state, u.row(t).transpose()) +
              spec.sigma_v * process.normal_vector(n);
    }
  }
  return DriftingLTVData{Trajectory(x, u), params};
}

}  // namespace sysid
