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

#include "io.hpp"

#include <unistd.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sysid/error.hpp"

namespace sysid::cli {

namespace {

Error parse_error(const std::string& msg) { return Error(ErrorCode::kParseError, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw parse_error("expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw parse_error("expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw parse_error(std::string("missing field ") + name);
  return j.at(name);
}

void expect_type(const Json& j, const std::string& type) {
  if (field(j, "type") != type) throw parse_error("model type is not " + type);
}

Json base(const std::string& type, const Json& dims, const ModelMetadata& meta) {
  Json j;
  j["type"] = type;
  j["dims"] = dims;
  j["metadata"] = {{"method", meta.method}, {"lambda", meta.lambda}, {"seed", meta.seed}};
  return j;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& token) {
  const std::string t = trim(token);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (t.empty() || res.ec != std::errc() || res.ptr != last)
    throw parse_error("not a number: '" + token + "'");
  return v;
}

void atomic_write(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::kInvalidArgument, "cannot write " + tmp.string());
    f << contents;
    f.flush();
    if (!f) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::kInvalidArgument, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kInvalidArgument, "cannot rename onto " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw parse_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<std::string> cells = split(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      throw parse_error("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(table.header.size()) + " fields");
    std::vector<double> row;
    for (const auto& c : cells) {
      const double v = parse_double(c);
      if (!std::isfinite(v)) throw parse_error("line " + std::to_string(lineno) + ": non-finite value");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw parse_error("empty CSV");
  table.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

std::string format_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& data) {
  if (static_cast<Eigen::Index>(header.size()) != data.cols())
    throw Error(ErrorCode::kDimensionMismatch, "header and data widths differ");
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      if (c) out += ',';
      out += format_double(data(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string format_trajectory(const Trajectory& traj) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < traj.n(); ++i) header.push_back("x" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < traj.m(); ++i) header.push_back("u" + std::to_string(i + 1));
  Eigen::MatrixXd data(traj.length(), 1 + traj.n() + traj.m());
  for (Eigen::Index k = 0; k < traj.length(); ++k) data(k, 0) = static_cast<double>(k) * traj.dt();
  data.middleCols(1, traj.n()) = traj.x();
  data.rightCols(traj.m()) = traj.u();
  return format_csv(header, data);
}

Trajectory parse_trajectory(const std::string& text) {
  const CsvTable table = parse_csv(text);
  const auto& h = table.header;
  if (h.empty() || h[0] != "t") throw parse_error("first column must be t");
  Eigen::Index n = 0, m = 0;
  std::size_t i = 1;
  while (i < h.size() && h[i] == "x" + std::to_string(n + 1)) ++n, ++i;
  while (i < h.size() && h[i] == "u" + std::to_string(m + 1)) ++m, ++i;
  if (i != h.size() || n == 0 || m == 0)
    throw parse_error("header must be t,x1..xn,u1..um with n, m >= 1");
  const Eigen::Index rows = table.data.rows();
  if (rows < 2) throw parse_error("need at least two samples");
  const Eigen::VectorXd t = table.data.col(0);
  const double dt = t(1) - t(0);
  for (Eigen::Index k = 1; k < rows; ++k) {
    const double d = t(k) - t(k - 1);
    if (!(d > 0.0)) throw parse_error("t must be strictly increasing");
    if (std::abs(d - dt) > 1e-6 * std::max(1.0, std::abs(dt)))
      throw parse_error("t must be uniformly spaced");
  }
  return Trajectory(table.data.middleCols(1, n), table.data.rightCols(m), dt);
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw parse_error("expected a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(r)]);
    if (row.size() != cols) throw parse_error("ragged matrix");
    m.row(r) = row.transpose();
  }
  return m;
}

Json to_json(const LTIModel& model, const ModelMetadata& meta) {
  Json j = base("lti", {{"n", model.A.rows()}, {"m", model.B.cols()}}, meta);
  j["A"] = matrix_to_json(model.A);
  j["B"] = matrix_to_json(model.B);
  return j;
}

Json to_json(const LTVModel& model, const ModelMetadata& meta) {
  Json j = base("ltv", {{"n", model.n()}, {"m", model.m()}, {"steps", model.steps()}}, meta);
  Json a = Json::array(), b = Json::array();
  for (Eigen::Index t = 0; t < model.steps(); ++t) {
    a.push_back(matrix_to_json(model.A[t]));
    b.push_back(matrix_to_json(model.B[t]));
  }
  j["A"] = std::move(a);
  j["B"] = std::move(b);
  if (model.param_covs) {
    Json covs = Json::array();
    for (const auto& c : *model.param_covs) covs.push_back(matrix_to_json(c));
    j["param_covs"] = std::move(covs);
  }
  return j;
}

Json to_json(const SegmentedModel& model, Eigen::Index steps, const ModelMetadata& meta) {
  const Eigen::Index n = model.segment_models.front().A.rows();
  const Eigen::Index m = model.segment_models.front().B.cols();
  Json j = base("segmented", {{"n", n}, {"m", m}, {"steps", steps}}, meta);
  j["breakpoints"] = model.breakpoints;
  Json segs = Json::array();
  for (std::size_t s = 0; s < model.segment_models.size(); ++s) {
    Json seg;
    seg["A"] = matrix_to_json(model.segment_models[s].A);
    seg["B"] = matrix_to_json(model.segment_models[s].B);
    seg["cost"] = model.segment_costs[s];
    segs.push_back(std::move(seg));
  }
  j["segments"] = std::move(segs);
  j["total_cost"] = model.total_cost;
  return j;
}

Json to_json(const SpectralEstimate& est, const ModelMetadata& meta) {
  Json j = base("spectral",
                {{"frequencies", est.num_frequencies()}, {"basis", est.bfe.size()}}, meta);
  j["omega"] = to_vector(est.omega);
  j["basis"] = {{"centers", to_vector(est.bfe.centers)},
                {"widths", to_vector(est.bfe.widths)},
                {"normalized", est.bfe.normalized}};
  j["coeffs_real"] = matrix_to_json(est.coeffs.real());
  j["coeffs_imag"] = matrix_to_json(est.coeffs.imag());
  j["sigma2"] = est.sigma2;
  j["regularizer"] = est.regularizer;
  if (est.covariance) j["covariance"] = matrix_to_json(*est.covariance);
  return j;
}

ModelMetadata metadata_from_json(const Json& j) {
  const Json& m = field(j, "metadata");
  ModelMetadata meta;
  meta.method = field(m, "method").get<std::string>();
  meta.lambda = field(m, "lambda").get<double>();
  meta.seed = field(m, "seed").get<std::uint64_t>();
  return meta;
}

LTIModel lti_from_json(const Json& j) {
  expect_type(j, "lti");
  return {matrix_from_json(field(j, "A")), matrix_from_json(field(j, "B"))};
}

LTVModel ltv_from_json(const Json& j) {
  expect_type(j, "ltv");
  LTVModel model;
  for (const auto& a : field(j, "A")) model.A.push_back(matrix_from_json(a));
  for (const auto& b : field(j, "B")) model.B.push_back(matrix_from_json(b));
  if (model.A.size() != model.B.size()) throw parse_error("A and B lengths differ");
  if (j.contains("param_covs")) {
    std::vector<Eigen::MatrixXd> covs;
    for (const auto& c : j.at("param_covs")) covs.push_back(matrix_from_json(c));
    model.param_covs = std::move(covs);
  }
  const ModelMetadata meta = metadata_from_json(j);
  model.method = meta.method;
  model.lambda = meta.lambda;
  return model;
}

SegmentedModel segmented_from_json(const Json& j) {
  expect_type(j, "segmented");
  SegmentedModel model;
  model.breakpoints = field(j, "breakpoints").get<std::vector<Eigen::Index>>();
  for (const auto& seg : field(j, "segments")) {
    model.segment_models.push_back({matrix_from_json(field(seg, "A")), matrix_from_json(field(seg, "B"))});
    model.segment_costs.push_back(field(seg, "cost").get<double>());
  }
  if (model.segment_models.size() != model.breakpoints.size() + 1)
    throw parse_error("segment count must be breakpoints + 1");
  model.total_cost = field(j, "total_cost").get<double>();
  return model;
}

SpectralEstimate spectral_from_json(const Json& j) {
  expect_type(j, "spectral");
  SpectralEstimate est;
  est.omega = vector_from_json(field(j, "omega"));
  const Json& b = field(j, "basis");
  est.bfe.centers = vector_from_json(field(b, "centers"));
  est.bfe.widths = vector_from_json(field(b, "widths"));
  est.bfe.normalized = field(b, "normalized").get<bool>();
  const Eigen::MatrixXd re = matrix_from_json(field(j, "coeffs_real"));
  const Eigen::MatrixXd im = matrix_from_json(field(j, "coeffs_imag"));
  if (re.rows() != im.rows() || re.cols() != im.cols()) throw parse_error("coefficient shapes differ");
  est.coeffs.resize(re.rows(), re.cols());
  est.coeffs.real() = re;
  est.coeffs.imag() = im;
  est.sigma2 = field(j, "sigma2").get<double>();
  est.regularizer = field(j, "regularizer").get<std::string>();
  if (j.contains("covariance")) est.covariance = matrix_from_json(j.at("covariance"));
  return est;
}

std::string dump(const Json& j) { return j.dump() + "\n"; }

}  // namespace sysid::cli
