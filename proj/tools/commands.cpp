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

#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>

#include <CLI11.hpp>

#include "io.hpp"
#include "sysid/ltv.hpp"
#include "sysid/random.hpp"
#include "sysid/simulators.hpp"

namespace sysid::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& list, bool allow_pi) {
  std::vector<double> vals;
  std::size_t start = 0;
  while (true) {
    const auto comma = list.find(',', start);
    std::string tok = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    double scale = 1.0;
    if (allow_pi && tok.size() >= 2 && tok.compare(tok.size() - 2, 2, "pi") == 0) {
      scale = std::numbers::pi;
      tok.erase(tok.size() - 2);
      if (tok.empty()) tok = "1";
    }
    vals.push_back(scale * parse_double(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return vals;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension(suffix);
  return p.string();
}

// ident ---------------------------------------------------------------------

struct IdentArgs {
  std::string input;
  std::string method;
  std::string lambda = "auto";
  std::string poly;
  Eigen::Index segments = 1;
  std::string prior;
  std::string output;
  std::string steps;
};

struct MethodInfo {
  bool l2 = false;
  bool sparse = false;
  SparsePenalty penalty = SparsePenalty::kGroup;
  int order = 1;
  std::optional<ParameterEvolution> evolution;
  std::string penalty_name;
  std::string order_name;
  std::string result;
};

MethodInfo method_info(const IdentArgs& a) {
  MethodInfo info;
  const std::string& m = a.method;
  if (m == "l2d1" || m == "l2d2" || m == "poly") {
    info.l2 = true;
    info.penalty_name = "squared l2";
    if (m == "l2d1") {
      info.evolution = ParameterEvolution::random_walk();
      info.order_name = "1";
      info.result = "slowly varying";
    } else if (m == "l2d2") {
      info.evolution = ParameterEvolution::second_order();
      info.order = 2;
      info.order_name = "2";
      info.result = "smooth";
    } else {
      if (a.poly.empty()) throw UsageError("--method poly needs --poly c0,c1,...");
      const std::vector<double> c = parse_list(a.poly, false);
      info.evolution = ParameterEvolution::polynomial(c);
      info.order_name = std::to_string(c.size());
      info.result = "polynomial evolution";
    }
  } else if (m == "gl1" || m == "gl2" || m == "l1") {
    info.sparse = true;
    info.penalty = m == "l1" ? SparsePenalty::kL1 : SparsePenalty::kGroup;
    info.order = m == "gl2" ? 2 : 1;
    info.evolution = info.order == 2 ? ParameterEvolution::second_order()
                                     : ParameterEvolution::random_walk();
    info.penalty_name = m == "l1" ? "l1" : "group l2";
    info.order_name = std::to_string(info.order);
    info.result = m == "gl2"   ? "piecewise affine"
                  : m == "l1" ? "piecewise constant per parameter"
                              : "piecewise constant";
  } else if (m == "dp") {
    info.penalty_name = "segment count";
    info.order_name = "-";
    info.result = "piecewise constant with " + std::to_string(a.segments) + " breakpoints";
  } else {
    info.penalty_name = "none";
    info.order_name = "-";
    info.result = "constant";
  }
  return info;
}

PriorFunction load_prior(const std::string& path, Eigen::Index num_params) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParseError, "prior file: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("mean") || !j.contains("cov"))
    throw Error(ErrorCode::kParseError, "prior file needs mean and cov");
  GaussianPrior g;
  const Eigen::MatrixXd mean = matrix_from_json(Json::array({j.at("mean")}));
  g.mean = mean.row(0).transpose();
  g.cov = matrix_from_json(j.at("cov"));
  if (g.mean.size() != num_params || g.cov.rows() != num_params || g.cov.cols() != num_params)
    throw Error(ErrorCode::kDimensionMismatch,
                "prior must have " + std::to_string(num_params) + " entries");
  g.map = Eigen::MatrixXd::Identity(num_params, num_params);
  std::optional<std::set<Eigen::Index>> steps;
  if (j.contains("steps")) steps = j.at("steps").get<std::set<Eigen::Index>>();
  return [g, steps](Eigen::Index t) -> std::optional<GaussianPrior> {
    if (steps && !steps->count(t)) return std::nullopt;
    return g;
  };
}

LTVModel constant_ltv(const LTIModel& lti, Eigen::Index steps) {
  LTVModel model;
  model.A.assign(static_cast<std::size_t>(steps), lti.A);
  model.B.assign(static_cast<std::size_t>(steps), lti.B);
  return model;
}

int cmd_ident(const IdentArgs& a, std::ostream& out) {
  const Trajectory traj = parse_trajectory(read_file(a.input));
  const MethodInfo info = method_info(a);
  if (!a.prior.empty() && !info.l2) throw UsageError("--prior applies to l2d1, l2d2 and poly");

  const Identifiability id = check_identifiability(traj, info.order);
  if (!id.well_posed) {
    throw Error(ErrorCode::kIllPosed,
                "ill-posed data: the [x u] regressors are rank deficient (singular values " +
                    format_double(id.min_singular_value) + " .. " +
                    format_double(id.max_singular_value) + ")");
  }

  double lambda = 0.0;
  if (info.l2 || info.sparse) {
    lambda = a.lambda == "auto" ? select_lambda_ml(traj, auto_lambda_grid(), *info.evolution).best_lambda
                                : parse_double(a.lambda);
  }
  ModelMetadata meta{a.method, lambda, 0};

  LTVModel model;
  Json doc;
  std::string changes_label = "largest_change";
  std::string changes_value;
  if (info.l2) {
    FitL2Options opts;
    if (!a.prior.empty()) opts.prior = load_prior(a.prior, traj.num_params());
    model = fit_l2(traj, lambda, *info.evolution, opts);
    doc = to_json(model, meta);
  } else if (info.sparse) {
    model = fit_sparse(traj, lambda, info.order, info.penalty);
    doc = to_json(model, meta);
  } else if (a.method == "dp") {
    const SegmentedModel seg = fit_segments_dp(traj, a.segments);
    model = seg.to_ltv(traj.steps());
    doc = to_json(seg, traj.steps(), meta);
    changes_label = "breakpoints";
    for (std::size_t i = 0; i < seg.breakpoints.size(); ++i)
      changes_value += (i ? " " : "") + std::to_string(seg.breakpoints[i]);
  } else {
    const LTIModel lti = fit_lti(traj);
    model = constant_ltv(lti, traj.steps());
    doc = to_json(lti, meta);
    changes_label.clear();
  }
  atomic_write(a.output, dump(doc));

  const Eigen::VectorXd changes = parameter_changes(model, info.order);
  if (changes_label == "largest_change") {
    Eigen::Index k = 0;
    changes.maxCoeff(&k);
    changes_value = std::to_string(k + 1);
  }
  const double rms =
      std::sqrt(ltv_prediction_sos(traj, model) / static_cast<double>(traj.steps() * traj.n()));

  out << "# method,penalty,order,result\n";
  out << "# " << a.method << ',' << info.penalty_name << ',' << info.order_name << ','
      << info.result << '\n';
  if (info.l2 || info.sparse) out << "# lambda=" << format_double(lambda) << '\n';
  if (!changes_label.empty()) out << "# " << changes_label << '=' << changes_value << '\n';
  out << "# prediction_rms=" << format_double(rms) << '\n';
  const std::string csv = step_norm_csv(changes);
  out << csv;
  if (!a.steps.empty()) atomic_write(a.steps, csv);
  return kOk;
}

// spectral ------------------------------------------------------------------

struct SpectralArgs {
  std::string input;
  std::string freqs;
  Eigen::Index nbasis = 10;
  std::optional<double> vmin;
  std::optional<double> vmax;
  std::string reg = "none";
  std::optional<double> ci;
  Eigen::Index mc = 2000;
  Eigen::Index vgrid = 101;
  std::uint64_t seed = 0;
  std::string output;
  std::string table;
  std::string power;
  std::string demo;
};

ScheduledSignal read_signal(const std::string& path) {
  const CsvTable t = parse_csv(read_file(path));
  const Eigen::Index cx = t.column("x"), cv = t.column("v"), cy = t.column("y");
  if (cx < 0 || cv < 0 || cy < 0) throw Error(ErrorCode::kParseError, "input needs columns x, v and y");
  ScheduledSignal s{t.data.col(cx), t.data.col(cv), t.data.col(cy)};
  s.validate();
  return s;
}

struct SpectralFit {
  SpectralEstimate est;
  double lambda = 0.0;
};

SpectralFit fit_with(const ScheduledSignal& s, const Eigen::VectorXd& omega,
                     const BasisFunctionExpansion& bfe, const RegularizerChoice& choice) {
  SpectralRegularizer reg = choice.regularizer;
  if (choice.gcv) reg = SpectralRegularizer::ridge(select_ridge_gcv(s, omega, bfe, gcv_ridge_grid()).best_lambda);
  return {fit_spectrum(s, omega, bfe, reg), reg.lambda};
}

void write_spectral(const SpectralArgs& a, const SpectralFit& fit, const Eigen::VectorXd& v_grid) {
  if (a.output.empty()) return;
  atomic_write(a.output, dump(to_json(fit.est, {fit.est.regularizer, fit.lambda, a.seed})));
  atomic_write(a.table.empty() ? sibling(a.output, ".table.csv") : a.table,
               spectral_table_csv(fit.est, v_grid, a.ci, a.mc, a.seed));
  atomic_write(a.power.empty() ? sibling(a.output, ".power.csv") : a.power, power_csv(fit.est));
}

int spectral_demo(const SpectralArgs& a, std::ostream& out) {
  if (a.demo != "ch10") throw UsageError("unknown demo '" + a.demo + "'");
  const LpvTestSignal ts = gen_lpv_test_signal(500, a.seed);
  const BasisFunctionExpansion bfe = BasisFunctionExpansion::uniform(0.0, 1.0, 50);
  const SpectralFit fit = fit_with(ts.signal, ts.omega, bfe, {SpectralRegularizer::none(), true});
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(91, 0.05, 0.95);
  const double level = a.ci.value_or(0.95);

  out << "# ridge_lambda=" << format_double(fit.lambda) << '\n';
  out << "component,omega,amplitude_rms,band_coverage\n";
  for (Eigen::Index c = 0; c < ts.omega.size(); ++c) {
    const ConfidenceBands b = confidence_bands(fit.est, c, v, level, a.mc, a.seed);
    double se = 0.0;
    Eigen::Index covered = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double truth = lpv_test_amplitude(c, v(i));
      se += std::pow(b.amplitude(i) - truth, 2);
      if (b.amplitude_lo(i) <= truth && truth <= b.amplitude_hi(i)) ++covered;
    }
    out << c << ',' << format_double(ts.omega(c)) << ','
        << format_double(std::sqrt(se / static_cast<double>(v.size()))) << ','
        << format_double(static_cast<double>(covered) / static_cast<double>(v.size())) << '\n';
  }

  // Group lasso over the true lines plus twelve decoys.
  Eigen::VectorXd grid(15);
  for (Eigen::Index k = 0; k < 12; ++k) grid(k) = 2.0 * std::numbers::pi + 8.0 * std::numbers::pi * static_cast<double>(k);
  grid.tail(3) = ts.omega;
  const Eigen::VectorXd p =
      power_spectrum(fit_spectrum(ts.signal, grid, bfe, SpectralRegularizer::group_l2(10.0)));
  out << "# group_l2 lambda=10: min_true_power=" << format_double(p.tail(3).minCoeff())
      << " max_decoy_power=" << format_double(p.head(12).maxCoeff()) << '\n';

  SpectralArgs files = a;
  files.ci = level;
  write_spectral(files, fit, v);
  return kOk;
}

int cmd_spectral(const SpectralArgs& a, std::ostream& out) {
  if (!a.demo.empty()) return spectral_demo(a, out);
  if (a.input.empty()) throw UsageError("spectral needs an input file or --demo");
  if (a.output.empty()) throw UsageError("spectral needs --output");
  if (a.freqs.empty()) throw UsageError("spectral needs --freqs");
  const RegularizerChoice choice = parse_regularizer(a.reg);
  if (a.ci && (choice.regularizer.kind == SpectralRegularizer::Kind::kL1 ||
               choice.regularizer.kind == SpectralRegularizer::Kind::kGroupL2))
    throw UsageError("--ci needs --reg none, ridge or gcv");
  if (a.ci && !(*a.ci > 0.0 && *a.ci < 1.0)) throw UsageError("--ci must lie in (0, 1)");
  if (a.vgrid < 1) throw UsageError("--vgrid must be positive");

  const ScheduledSignal s = read_signal(a.input);
  const Eigen::VectorXd omega = parse_frequencies(a.freqs);
  const double lo = a.vmin.value_or(s.v.minCoeff());
  const double hi = a.vmax.value_or(s.v.maxCoeff());
  const BasisFunctionExpansion bfe = BasisFunctionExpansion::uniform(lo, hi, a.nbasis);
  const SpectralFit fit = fit_with(s, omega, bfe, choice);
  write_spectral(a, fit, Eigen::VectorXd::LinSpaced(a.vgrid, lo, hi));
  out << "# regularizer=" << fit.est.regularizer << " lambda=" << format_double(fit.lambda)
      << " sigma2=" << format_double(fit.est.sigma2) << '\n';
  out << power_csv(fit.est);
  return kOk;
}

// rl ------------------------------------------------------------------------

struct RlArgs {
  std::string env = "pendulum";
  std::string model;
  int iters = 25;
  std::uint64_t seed = 0;
  Eigen::Index horizon = 400;
  double kl_epsilon = 10.0;
  std::string output;
};

int cmd_rl(const RlArgs& a, std::ostream& out) {
  const RLModel model = parse_rl_model(a.model);
  const PendulumTask task = pendulum_damping_task(a.horizon);
  RLOptions ro;
  ro.iterations = a.iters;
  ro.seed = a.seed;
  ro.kl_epsilon = a.kl_epsilon;
  ro.ilqr.u_min = task.u_min;
  ro.ilqr.u_max = task.u_max;
  const RLResult r = rl_loop(task.env, model, task.cost, task.x0, task.u_init, ro);
  atomic_write(a.output, rl_trace_csv(r));
  out << "# final_cost=" << format_double(r.cost_trace.back()) << '\n';
  return kOk;
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string gen;
  std::uint64_t seed = 0;
  std::optional<Eigen::Index> length;
  std::optional<double> dt;
  std::optional<Eigen::Index> n;
  std::optional<Eigen::Index> m;
  std::optional<double> sigma_e;
  std::optional<double> sigma_v;
  std::optional<double> sigma_w;
  std::optional<Eigen::Index> switch_step;
  double theta0 = 0.5;
  double input_std = 1.0;
  std::string output;
  std::string meta;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  Json meta;
  meta["generator"] = a.gen;
  meta["seed"] = a.seed;
  std::optional<Trajectory> traj;
  if (a.gen == "jump") {
    JumpLinearSpec spec;
    spec.seed = a.seed;
    spec.length = a.length.value_or(spec.length);
    spec.sigma_e = a.sigma_e.value_or(spec.sigma_e);
    spec.sigma_v = a.sigma_v.value_or(spec.sigma_v);
    spec.switch_step = a.switch_step.value_or(spec.switch_step);
    const JumpLinearData d = gen_jump_linear(spec);
    traj = d.traj;
    meta["length"] = spec.length;
    meta["sigma_e"] = spec.sigma_e;
    meta["sigma_v"] = spec.sigma_v;
    meta["breakpoints"] = d.breakpoints;
    Json models = Json::array();
    for (const auto& mdl : d.models) models.push_back({{"A", matrix_to_json(mdl.A)}, {"B", matrix_to_json(mdl.B)}});
    meta["models"] = std::move(models);
  } else if (a.gen == "drift") {
    DriftingLTVSpec spec;
    spec.seed = a.seed;
    spec.length = a.length.value_or(spec.length);
    spec.sigma_v = a.sigma_v.value_or(spec.sigma_v);
    spec.sigma_w = a.sigma_w.value_or(spec.sigma_w);
    spec.n = a.n.value_or(spec.n);
    spec.m = a.m.value_or(spec.m);
    spec.dt = a.dt.value_or(spec.dt);
    const DriftingLTVData d = gen_drifting_ltv(spec);
    traj = d.traj;
    meta["length"] = spec.length;
    meta["sigma_v"] = spec.sigma_v;
    meta["sigma_w"] = spec.sigma_w;
    meta["n"] = spec.n;
    meta["m"] = spec.m;
    meta["dt"] = spec.dt;
    meta["true_params"] = matrix_to_json(d.true_params);
  } else if (a.gen == "pendulum") {
    PendulumParams p;
    p.dt = a.dt.value_or(p.dt);
    p.validate();
    const Eigen::Index steps = a.length.value_or(400);
    if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "--length must be positive");
    RandomStream rng(a.seed, 0);
    Eigen::MatrixXd x(steps + 1, 4), u(steps + 1, 1);
    x.row(0) = PendulumState(a.theta0, 0.0, 0.0, 0.0).transpose();
    for (Eigen::Index k = 0; k <= steps; ++k) u(k, 0) = a.input_std * rng.normal();
    for (Eigen::Index k = 0; k < steps; ++k)
      x.row(k + 1) = pendulum_step(x.row(k).transpose(), u(k, 0), p).transpose();
    traj.emplace(x, u, p.dt);
    meta["length"] = steps;
    meta["dt"] = p.dt;
    meta["g"] = p.g;
    meta["l"] = p.l;
    meta["d"] = p.d;
    meta["theta0"] = a.theta0;
    meta["input_std"] = a.input_std;
  } else {
    const Eigen::Index n = a.n.value_or(3);
    const Eigen::Index m = a.m.value_or(n);
    const double dt = a.dt.value_or(0.02);
    const Eigen::Index steps = a.length.value_or(200);
    if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "--length must be positive");
    const LTIModel sys = random_stable_linear(n, dt, a.seed, m);
    RandomStream rng(a.seed, 1);
    Eigen::MatrixXd x(steps + 1, n), u(steps + 1, m);
    x.row(0) = rng.normal_vector(n).transpose();
    for (Eigen::Index k = 0; k <= steps; ++k) u.row(k) = (a.input_std * rng.normal_vector(m)).transpose();
    for (Eigen::Index k = 0; k < steps; ++k)
      x.row(k + 1) = sys.predict(x.row(k).transpose(), u.row(k).transpose()).transpose();
    traj.emplace(x, u, dt);
    meta["length"] = steps;
    meta["n"] = n;
    meta["m"] = m;
    meta["dt"] = dt;
    meta["eigenvalue_magnitude"] = sys.A.eigenvalues().cwiseAbs().maxCoeff();
    meta["A"] = matrix_to_json(sys.A);
    meta["B"] = matrix_to_json(sys.B);
  }
  atomic_write(a.output, format_trajectory(*traj));
  atomic_write(a.meta.empty() ? sibling(a.output, ".meta.json") : a.meta, dump(meta));
  out << "# wrote " << traj->length() << " samples, n=" << traj->n() << " m=" << traj->m() << '\n';
  return kOk;
}

}  // namespace

int exit_code_for(const Error& e) {
  if (e.code() == ErrorCode::kParseError) return kUsage;
  return is_numerical(e.code()) ? kNumerical : kData;
}

std::vector<double> auto_lambda_grid() {
  std::vector<double> g;
  for (int e = -2; e <= 4; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

std::vector<double> gcv_ridge_grid() {
  std::vector<double> g;
  for (int e = -8; e <= 2; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

Eigen::VectorXd parse_frequencies(const std::string& list) {
  std::vector<double> vals = parse_list(list, true);
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

RegularizerChoice parse_regularizer(const std::string& text) {
  if (text == "none") return {SpectralRegularizer::none(), false};
  if (text == "gcv") return {SpectralRegularizer::none(), true};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("bad --reg '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const double l = parse_double(text.substr(colon + 1));
  if (kind == "ridge") return {SpectralRegularizer::ridge(l), false};
  if (kind == "l1") return {SpectralRegularizer::l1(l), false};
  if (kind == "group") return {SpectralRegularizer::group_l2(l), false};
  throw UsageError("bad --reg '" + text + "'");
}

std::string step_norm_csv(const Eigen::VectorXd& changes) {
  Eigen::MatrixXd data(changes.size(), 2);
  for (Eigen::Index t = 0; t < changes.size(); ++t) data(t, 0) = static_cast<double>(t + 1);
  data.col(1) = changes;
  return format_csv({"t", "step_norm"}, data);
}

std::string rl_trace_csv(const RLResult& result) {
  const auto n = static_cast<Eigen::Index>(result.cost_trace.size());
  Eigen::MatrixXd data(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    data(i, 0) = static_cast<double>(i + 1);
    data(i, 1) = result.cost_trace[k];
    data(i, 2) = k < result.kl_trace.size() ? result.kl_trace[k] : std::nan("");
  }
  return format_csv({"iteration", "cost", "kl"}, data);
}

std::string power_csv(const SpectralEstimate& est) {
  Eigen::MatrixXd data(est.num_frequencies(), 2);
  data.col(0) = est.omega;
  data.col(1) = power_spectrum(est);
  return format_csv({"omega", "power"}, data);
}

std::string spectral_table_csv(const SpectralEstimate& est, const Eigen::VectorXd& v_grid,
                               std::optional<double> level, Eigen::Index n_mc,
                               std::uint64_t seed) {
  std::vector<std::string> header{"omega", "v", "amplitude", "phase"};
  if (level) header.insert(header.end(), {"amplitude_lo", "amplitude_hi", "phase_lo", "phase_hi"});
  const Eigen::Index g = v_grid.size();
  Eigen::MatrixXd data(est.num_frequencies() * g, static_cast<Eigen::Index>(header.size()));
  for (Eigen::Index o = 0; o < est.num_frequencies(); ++o) {
    auto block = data.middleRows(o * g, g);
    block.col(0).setConstant(est.omega(o));
    block.col(1) = v_grid;
    if (level) {
      const ConfidenceBands b = confidence_bands(est, o, v_grid, *level, n_mc, seed);
      block.col(2) = b.amplitude;
      block.col(3) = b.phase;
      block.col(4) = b.amplitude_lo;
      block.col(5) = b.amplitude_hi;
      block.col(6) = b.phase_lo;
      block.col(7) = b.phase_hi;
    } else {
      for (Eigen::Index i = 0; i < g; ++i) {
        block(i, 2) = amplitude(est, o, v_grid(i));
        try {
          block(i, 3) = phase(est, o, v_grid(i));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kPhaseUndefined) throw;
          block(i, 3) = std::nan("");
        }
      }
    }
  }
  return format_csv(header, data);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Identification, spectral estimation and trajectory optimization tools", "sysid"};
  app.require_subcommand(1);

  IdentArgs ident;
  auto* ci = app.add_subcommand("ident", "Fit an LTI, LTV or segmented model to a trajectory CSV");
  ci->add_option("input", ident.input, "Trajectory CSV (t,x1..xn,u1..um)")->required();
  ci->add_option("--method", ident.method, "Estimator")
      ->required()
      ->check(CLI::IsMember({"l2d1", "l2d2", "poly", "gl1", "gl2", "l1", "dp", "lti"}));
  ci->add_option("--lambda", ident.lambda, "Regularization weight, or auto (ML over 1e-2..1e4)")
      ->capture_default_str();
  ci->add_option("--poly", ident.poly, "Lower coefficients c0,c1,... of the poly evolution");
  ci->add_option("--segments", ident.segments, "Number of breakpoints for dp")
      ->capture_default_str();
  ci->add_option("--prior", ident.prior, "JSON prior {mean, cov, steps?} on k_t");
  ci->add_option("--output", ident.output, "Model JSON")->required();
  ci->add_option("--steps", ident.steps, "Also write the step-norm CSV here");

  SpectralArgs spectral;
  auto* cs = app.add_subcommand("spectral", "LPV spectral estimation from x, v, y samples");
  cs->add_option("input", spectral.input, "CSV with columns x, v and y");
  cs->add_option("--freqs", spectral.freqs, "Frequencies, e.g. 4pi,20pi,100pi");
  cs->add_option("--nbasis", spectral.nbasis, "Basis functions along v")->capture_default_str();
  cs->add_option("--vmin", spectral.vmin, "Lowest basis center (default: min v)");
  cs->add_option("--vmax", spectral.vmax, "Highest basis center (default: max v)");
  cs->add_option("--reg", spectral.reg, "none | gcv | ridge:L | l1:L | group:L")->capture_default_str();
  cs->add_option("--ci", spectral.ci, "Confidence level for amplitude/phase bands");
  cs->add_option("--mc", spectral.mc, "Monte Carlo draws for bands")->capture_default_str();
  cs->add_option("--vgrid", spectral.vgrid, "Points on the v grid of the table")->capture_default_str();
  cs->add_option("--seed", spectral.seed, "Seed for sampling")->capture_default_str();
  cs->add_option("--output", spectral.output, "Model JSON");
  cs->add_option("--table", spectral.table, "Amplitude/phase CSV (default: <output>.table.csv)");
  cs->add_option("--power", spectral.power, "Power CSV (default: <output>.power.csv)");
  cs->add_option("--demo", spectral.demo, "Built-in experiment (ch10)");

  RlArgs rl;
  auto* cr = app.add_subcommand("rl", "Model-based reinforcement learning on a simulated task");
  cr->add_option("--env", rl.env, "Environment")->check(CLI::IsMember({"pendulum"}))->capture_default_str();
  cr->add_option("--model", rl.model, "Dynamics model")
      ->required()
      ->check(CLI::IsMember({"truth", "ltv", "lti"}));
  cr->add_option("--iters", rl.iters, "Learning iterations")->capture_default_str();
  cr->add_option("--seed", rl.seed, "Exploration seed")->capture_default_str();
  cr->add_option("--horizon", rl.horizon, "Steps per episode")->capture_default_str();
  cr->add_option("--kl", rl.kl_epsilon, "KL step limit")->capture_default_str();
  cr->add_option("--output", rl.output, "Cost-trace CSV")->required();

  SimulateArgs sim;
  auto* cg = app.add_subcommand("simulate", "Generate a trajectory CSV");
  cg->add_option("--gen", sim.gen, "Generator")
      ->required()
      ->check(CLI::IsMember({"jump", "drift", "pendulum", "randlin"}));
  cg->add_option("--seed", sim.seed, "Seed")->capture_default_str();
  cg->add_option("--length", sim.length, "Number of steps");
  cg->add_option("--dt", sim.dt, "Sample time");
  cg->add_option("--n", sim.n, "State dimension (drift, randlin)");
  cg->add_option("--m", sim.m, "Input dimension (drift, randlin)");
  cg->add_option("--sigma-e", sim.sigma_e, "Measurement noise (jump)");
  cg->add_option("--sigma-v", sim.sigma_v, "Process noise (jump, drift)");
  cg->add_option("--sigma-w", sim.sigma_w, "Parameter drift (drift)");
  cg->add_option("--switch", sim.switch_step, "Switch step (jump)");
  cg->add_option("--theta0", sim.theta0, "Initial angle (pendulum)")->capture_default_str();
  cg->add_option("--input-std", sim.input_std, "Input standard deviation (pendulum, randlin)")
      ->capture_default_str();
  cg->add_option("--output", sim.output, "Trajectory CSV")->required();
  cg->add_option("--meta", sim.meta, "Metadata JSON (default: <output>.meta.json)");

  std::vector<std::string> argv_store{"sysid"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (ci->parsed()) return cmd_ident(ident, out);
    if (cs->parsed()) return cmd_spectral(spectral, out);
    if (cr->parsed()) return cmd_rl(rl, out);
    return cmd_simulate(sim, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace sysid::cli
