#include "orbsim/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "orbsim/errors.hpp"

namespace orbsim {

using nlohmann::json;

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw IoError("CSV has no column '" + name + "'");
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return in;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError(path.string() + ": write failed");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != n) throw IoError("matrix in report is not square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

}  // namespace

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw IoError(path.string() + ": row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
  finish(out, path);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty CSV");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.header.size()) + " cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0')
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_trajectory_csv(const fs::path& path, const Eigen::MatrixXd& states) {
  std::vector<std::string> header{"k"};
  for (Eigen::Index i = 0; i < states.rows(); ++i) header.push_back("x" + std::to_string(i + 1));
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index k = 0; k < states.cols(); ++k) {
    std::vector<double> row{static_cast<double>(k)};
    for (Eigen::Index i = 0; i < states.rows(); ++i) row.push_back(states(i, k));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

Eigen::MatrixXd read_trajectory_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "k") throw IoError(path.string() + ": not a trajectory");
  const auto n = static_cast<Eigen::Index>(t.header.size() - 1);
  Eigen::MatrixXd states(n, static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t k = 0; k < t.rows.size(); ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      states(i, static_cast<Eigen::Index>(k)) = t.rows[k][static_cast<std::size_t>(i + 1)];
  return states;
}

void write_cumulative_csv(const fs::path& path, const std::vector<double>& curve) {
  std::vector<std::vector<double>> rows;
  for (std::size_t m = 0; m < curve.size(); ++m) rows.push_back({static_cast<double>(m), curve[m]});
  write_csv(path, {"m", "rho"}, rows);
}

std::vector<double> read_cumulative_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t col = t.column("rho");
  std::vector<double> curve;
  for (const auto& row : t.rows) curve.push_back(row[col]);
  return curve;
}

void write_homotopy_csv(const fs::path& path, const std::vector<StageReport>& stages) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : stages) {
    if (!r.lambda) continue;
    rows.push_back({static_cast<double>(r.index), (*r.lambda)[0], (*r.lambda)[1], r.rho, r.omega,
                    r.residual_norm, r.kkt_lambda_norm});
  }
  write_csv(path, {"stage", "lambda1", "lambda2", "rho", "omega", "resA", "resL"}, rows);
}

json to_json(const StageReport& r) {
  json j;
  j["index"] = r.index;
  j["A"] = matrix_json(r.A.entries());
  j["bound"] = r.A.bound();
  j["rho"] = r.rho;
  j["omega"] = r.omega;
  j["residual_norm"] = r.residual_norm;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  if (r.candidate_rho) j["candidate_rho"] = *r.candidate_rho;
  if (r.previous_rho) j["previous_rho"] = *r.previous_rho;
  j["adopted_previous"] = r.adopted_previous;
  if (r.lambda) {
    j["lambda"] = {(*r.lambda)[0], (*r.lambda)[1]};
    j["kkt_lambda_norm"] = r.kkt_lambda_norm;
  }
  return j;
}

StageReport stage_report_from_json(const json& j) {
  try {
    StageReport r;
    r.index = j.at("index").get<Eigen::Index>();
    r.A = SimilarityMatrix(matrix_from_json(j.at("A")), j.value("bound", kDefaultBound));
    r.rho = j.at("rho").get<double>();
    r.omega = j.at("omega").get<double>();
    r.residual_norm = j.at("residual_norm").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.converged = j.at("converged").get<bool>();
    if (j.contains("candidate_rho")) r.candidate_rho = j["candidate_rho"].get<double>();
    if (j.contains("previous_rho")) r.previous_rho = j["previous_rho"].get<double>();
    r.adopted_previous = j.value("adopted_previous", false);
    if (j.contains("lambda")) {
      r.lambda = std::array<double, 2>{j["lambda"].at(0).get<double>(),
                                       j["lambda"].at(1).get<double>()};
      r.kkt_lambda_norm = j.value("kkt_lambda_norm", 0.0);
    }
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed stage report: ") + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

json read_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_stage_reports(const fs::path& path, const std::vector<StageReport>& stages) {
  json arr = json::array();
  for (const auto& r : stages) arr.push_back(to_json(r));
  write_json(path, arr);
}

std::vector<StageReport> read_stage_reports(const fs::path& path) {
  const json arr = read_json(path);
  if (!arr.is_array()) throw IoError(path.string() + ": expected a JSON array of stage reports");
  std::vector<StageReport> out;
  for (const auto& j : arr) out.push_back(stage_report_from_json(j));
  return out;
}

}  // namespace orbsim
