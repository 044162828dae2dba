#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "orbsim/staging.hpp"

namespace orbsim {

namespace fs = std::filesystem;

/// printf("%.17g"): enough digits for any double to read back exactly.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a header column; throws IoError if absent.
  std::size_t column(const std::string& name) const;
};

/// Throws IoError naming the path on failure.
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
CsvTable read_csv(const fs::path& path);

/// One row per column of `states`: k,x1,...,xn.
void write_trajectory_csv(const fs::path& path, const Eigen::MatrixXd& states);
/// Inverse of write_trajectory_csv; columns of the result are states.
Eigen::MatrixXd read_trajectory_csv(const fs::path& path);

/// m,rho for m = 0..size-1.
void write_cumulative_csv(const fs::path& path, const std::vector<double>& curve);
std::vector<double> read_cumulative_csv(const fs::path& path);

/// stage,lambda1,lambda2,rho,omega,resA,resL; stages without lambda are skipped.
void write_homotopy_csv(const fs::path& path, const std::vector<StageReport>& stages);

nlohmann::json to_json(const StageReport& r);
StageReport stage_report_from_json(const nlohmann::json& j);

/// JSON array of stage reports, pretty-printed.
void write_stage_reports(const fs::path& path, const std::vector<StageReport>& stages);
std::vector<StageReport> read_stage_reports(const fs::path& path);

void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

}  // namespace orbsim
