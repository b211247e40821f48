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
#include <vector>

#include <Eigen/Dense>

#include "sysid/least_squares.hpp"

namespace sysid {

// Pendulum on a cart --------------------------------------------------------
//
// State (theta, theta_dot, p, v) with theta measured from the downward
// position, driven by the cart acceleration u:
//   theta_ddot = -(g/l) sin(theta) + (u/l) cos(theta) - d theta_dot
//   p_dot = v,  v_dot = u

struct PendulumParams {
  double g = 9.82;
  double l = 1.0;
  double d = 0.1;
  double dt = 0.01;

  void validate() const;
};

using PendulumState = Eigen::Vector4d;

PendulumState pendulum_derivative(const PendulumState& x, double u, const PendulumParams& p);

/// One classical RK4 step of length p.dt.
PendulumState pendulum_step(const PendulumState& x, double u, const PendulumParams& p);

struct PendulumJacobian {
  Eigen::Matrix4d A;  // d x_next / d x
  Eigen::Vector4d B;  // d x_next / d u
};

/// Exact derivatives of pendulum_step, chained through the four RK4 stages.
PendulumJacobian pendulum_step_jacobian(const PendulumState& x, double u,
                                        const PendulumParams& p);

/// 0.5 theta_dot^2 - (g/l) cos(theta); conserved when d = 0 and u = 0.
double pendulum_energy(const PendulumState& x, const PendulumParams& p);

// Random linear systems ---------------------------------------------------

/// A = exp(dt (A0 - A0^T - dt I)) with A0 standard normal, so every
/// eigenvalue of A has magnitude exp(-dt^2). B (n x m) is standard normal.
LTIModel random_stable_linear(Eigen::Index n, double dt, std::uint64_t seed,
                              Eigen::Index m = -1);

// Jump-linear data ----------------------------------------------------------

struct JumpLinearSpec {
  Eigen::Index length = 400;
  std::uint64_t seed = 0;
  // Noise on the measured successor state y_t = x_{t+1} + e_t.
  double sigma_e = 0.2;
  // State-transition noise.
  double sigma_v = 0.2;
  // First step governed by the second model.
  Eigen::Index switch_step = 200;
};

struct JumpLinearData {
  Trajectory traj;
  std::vector<Eigen::Index> breakpoints;
  std::vector<LTIModel> models;
  // k_t for every step, one row per step.
  Eigen::MatrixXd true_params;
};

/// x_{t+1} = A_t x_t + B u_t + v_t with A_t switching from
/// [[0.95, 0.1], [0, 0.95]] to [[0.5, 0.05], [0, 0.5]] at `switch_step`,
/// B = [0.2; 1], u_t ~ N(0, 1), x_0 = 0. Every recorded successor carries
/// N(0, sigma_e^2) measurement noise and is the state the run continues
/// from.
JumpLinearData gen_jump_linear(const JumpLinearSpec& spec = {});

// Drifting LTV data ---------------------------------------------------------

struct DriftingLTVSpec {
  Eigen::Index length = 500;
  std::uint64_t seed = 0;
  double sigma_v = 0.01;
  double sigma_w = 0.001;
  Eigen::Index n = 3;
  Eigen::Index m = 2;
  // Sample time for the initial random stable system.
  double dt = 0.5;
};

struct DriftingLTVData {
  Trajectory traj;
  // k_t for every step, one row per step.
  Eigen::MatrixXd true_params;
};

/// k_{t+1} = k_t + w_t, x_{t+1} = A_t x_t + B_t u_t + v_t, states measured
/// exactly, u_t ~ N(0, I). k_0 comes from random_stable_linear.
DriftingLTVData gen_drifting_ltv(const DriftingLTVSpec& spec = {});

}  // namespace sysid
