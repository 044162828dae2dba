#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "orbsim/homotopy.hpp"
#include "orbsim/staging.hpp"
#include "orbsim/systems.hpp"

namespace orbsim {

namespace fs = std::filesystem;

enum class Mode { Simulate, AlignPontryagin, AlignBellman, AlignHomotopy };

std::string to_string(Mode mode);

/// A catalog system with parameter overrides, or a hybrid of two such
/// descriptors. `lambda` is used when a hybrid is simulated on its own.
struct SystemDescriptor {
  std::string name;
  ParamMap params;
  std::vector<SystemDescriptor> hybrid;
  std::optional<double> lambda;
};

System build_system(const SystemDescriptor& d);

struct LambdaSettings {
  LambdaPair init{0.5, 0.5};
  LambdaPair lo{0.0, 0.0};
  LambdaPair hi{1.0, 1.0};
  bool tie = false;
};

struct ExperimentConfig {
  Mode mode = Mode::Simulate;
  /// One system for simulate, the x and y systems otherwise.
  std::vector<SystemDescriptor> systems;
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(3, 0.1);
  Eigen::Index N = 2000;
  double dt = 0.01;
  std::optional<StagePlan> plan;
  double tau = 0.0;
  double tol = 1e-10;
  int max_iter = 200;
  /// Recorded in the summary; no step of the pipeline draws random numbers.
  std::uint64_t seed = 0;
  fs::path output_dir = "out";
  LambdaSettings lambda;
};

/// Parses a JSON config. Errors are ConfigError with "source:line: message";
/// the line is that of the offending key when it appears in the text.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const fs::path& path);

/// Throws ConfigError unless the mode's fields are present and consistent,
/// including N == plan.total_steps().
void validate(const ExperimentConfig& config);

/// x orbit, A x orbit and y orbit sampled on the same steps. The A x orbit
/// uses each stage's matrix on that stage.
struct PlotOrbits {
  Eigen::MatrixXd x;
  Eigen::MatrixXd ax;
  Eigen::MatrixXd y;
};

/// Writes into `dir`: orbit_{x,ax,y}.csv, plane_{xy,xz,yz}.csv,
/// stage_rho.csv, cumulative.csv and series.csv (y as actual, A x as
/// simulated). Nothing is written for an empty report list.
void emit_plot_data(const std::vector<StageReport>& reports, const std::vector<double>& cumulative,
                    const PlotOrbits& orbits, const fs::path& dir);

/// Runs one experiment and writes its artifacts under config.output_dir.
/// Returns the summary that was written to summary.json.
nlohmann::json run(const ExperimentConfig& config);

/// Names accepted by recipe_configs.
const std::vector<std::string>& recipe_names();

/// The runs of a recipe with their subdirectory ("" for a single run).
/// Output directories are set below `out`.
std::vector<std::pair<std::string, ExperimentConfig>> recipe_configs(const std::string& name,
                                                                     const fs::path& out);

/// Runs every config of a recipe and writes a combined summary.json in `out`
/// when there is more than one run.
nlohmann::json run_recipe(const std::vector<std::pair<std::string, ExperimentConfig>>& runs,
                          const std::string& name, const fs::path& out);

}  // namespace orbsim
