// orbsim command line: simulate, align and recipe.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "orbsim/errors.hpp"
#include "orbsim/experiment.hpp"
#include "orbsim/io.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

struct Overrides {
  std::optional<std::string> out;
  std::optional<double> tau;
  std::optional<double> tol;
};

void apply(orbsim::ExperimentConfig& c, const Overrides& o, const orbsim::fs::path& out) {
  if (o.out) c.output_dir = out;
  if (o.tau) c.tau = *o.tau;
  if (o.tol) c.tol = *o.tol;
  orbsim::validate(c);
}

void report(const nlohmann::json& summary, const std::string& where, bool quiet) {
  if (quiet) return;
  const auto line = [](const nlohmann::json& s) {
    std::string text = s.value("mode", "");
    if (s.contains("final_rho"))
      text += "  stages " + std::to_string(s["converged_stages"].get<int>()) + "/" +
              std::to_string(s["stages"].get<int>()) + " converged, median stage rho " +
              orbsim::format_number(s["stage_rho"]["median"].get<double>()) + ", final rho " +
              orbsim::format_number(s["final_rho"].get<double>());
    return text;
  };
  if (summary.contains("variants")) {
    for (const auto& [name, s] : summary["variants"].items()) std::cout << name << ": " << line(s) << '\n';
  } else {
    std::cout << line(summary) << '\n';
  }
  std::cout << "artifacts in " << where << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity alignment of orbits of discrete dynamical systems"};
  app.require_subcommand(1);
  app.fallthrough();

  bool quiet = false;
  app.add_flag("--quiet", quiet, "Print nothing on success");

  Overrides ov;
  std::string config_path;
  std::string recipe;
  std::string out;

  const auto add_common = [&](CLI::App* sub, bool tunable) {
    sub->add_option("--out", out, "Output directory (overrides the config)")
        ->each([&](const std::string&) { ov.out = out; });
    if (tunable) {
      sub->add_option_function<double>("--tau", [&](const double& v) { ov.tau = v; },
                                       "Penalty weight on the matrix");
      sub->add_option_function<double>("--tol", [&](const double& v) { ov.tol = v; },
                                       "Solver tolerance");
    }
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Integrate one system from a config");
  simulate->add_option("--config", config_path, "JSON config with mode simulate")->required();
  add_common(simulate, false);

  CLI::App* align = app.add_subcommand("align", "Align two orbits from a config");
  align->add_option("--config", config_path, "JSON config with an align-* mode")->required();
  add_common(align, true);

  CLI::App* rec = app.add_subcommand("recipe", "Run a built-in example");
  rec->add_option("--recipe", recipe, "example4.1 .. example4.5")
      ->required()
      ->check(CLI::IsMember(orbsim::recipe_names()));
  add_common(rec, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (rec->parsed()) {
      const orbsim::fs::path dir = ov.out ? orbsim::fs::path(out) : orbsim::fs::path("out") / recipe;
      auto runs = orbsim::recipe_configs(recipe, dir);
      for (auto& [sub, c] : runs) {
        if (ov.tau) c.tau = *ov.tau;
        if (ov.tol) c.tol = *ov.tol;
        orbsim::validate(c);
      }
      report(orbsim::run_recipe(runs, recipe, dir), dir.string(), quiet);
      return 0;
    }

    orbsim::ExperimentConfig c = orbsim::load_config(config_path);
    const bool want_sim = simulate->parsed();
    if (want_sim != (c.mode == orbsim::Mode::Simulate))
      throw orbsim::ConfigError(config_path + ":1: mode " + orbsim::to_string(c.mode) +
                                " does not belong to the '" + (want_sim ? "simulate" : "align") +
                                "' command");
    apply(c, ov, out);
    report(orbsim::run(c), c.output_dir.string(), quiet);
    return 0;
  } catch (const orbsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
}
