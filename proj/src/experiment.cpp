#include "orbsim/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "orbsim/errors.hpp"
#include "orbsim/integrator.hpp"
#include "orbsim/io.hpp"
#include "orbsim/similarity.hpp"

namespace orbsim {

using nlohmann::json;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Simulate: return "simulate";
    case Mode::AlignPontryagin: return "align-pontryagin";
    case Mode::AlignBellman: return "align-bellman";
    case Mode::AlignHomotopy: return "align-homotopy";
  }
  return "?";
}

System build_system(const SystemDescriptor& d) {
  if (!d.hybrid.empty()) {
    if (d.hybrid.size() != 2) throw ConfigError("a hybrid needs exactly two systems");
    return make_hybrid(build_system(d.hybrid[0]), build_system(d.hybrid[1]));
  }
  return make_system(d.name, d.params);
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::size_t line_at(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    std::size_t line = 1;
    if (!key.empty()) {
      const auto pos = text_.find("\"" + key + "\"");
      if (pos != std::string::npos) line = line_at(text_, pos);
    }
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  double number(const json& j, const std::string& key) const {
    if (!j.is_number()) fail(key, "'" + key + "' must be a number");
    return j.get<double>();
  }

  long long integer(const json& j, const std::string& key) const {
    if (!j.is_number_integer()) fail(key, "'" + key + "' must be an integer");
    return j.get<long long>();
  }

  LambdaPair pair(const json& j, const std::string& key) const {
    if (j.is_number()) return {j.get<double>(), j.get<double>()};
    if (!j.is_array() || j.size() != 2) fail(key, "'" + key + "' must be a number or a pair");
    return {number(j[0], key), number(j[1], key)};
  }

  SystemDescriptor system(const json& j) const {
    if (!j.is_object()) fail("systems", "each system must be an object");
    SystemDescriptor d;
    for (const auto& [key, value] : j.items()) {
      if (key == "name") {
        if (!value.is_string()) fail(key, "'name' must be a string");
        d.name = value.get<std::string>();
      } else if (key == "params") {
        if (!value.is_object()) fail(key, "'params' must be an object");
        for (const auto& [p, v] : value.items()) d.params[p] = number(v, p);
      } else if (key == "hybrid") {
        if (!value.is_array() || value.size() != 2)
          fail(key, "'hybrid' must list exactly two systems");
        for (const auto& s : value) d.hybrid.push_back(system(s));
      } else if (key == "lambda") {
        d.lambda = number(value, key);
      } else {
        fail(key, "unknown system field '" + key + "'");
      }
    }
    if (d.name.empty() == d.hybrid.empty()) fail("systems", "a system needs either 'name' or 'hybrid'");
    try {
      build_system(d);
    } catch (const Error& e) {
      fail(d.name.empty() ? "hybrid" : d.name, e.what());
    }
    return d;
  }

  ExperimentConfig config() const {
    json root;
    try {
      root = json::parse(text_);
    } catch (const json::parse_error& e) {
      throw ConfigError(source_ + ":" + std::to_string(line_at(text_, e.byte)) +
                        ": invalid JSON (" + e.what() + ")");
    }
    if (!root.is_object()) fail("", "config must be a JSON object");

    ExperimentConfig c;
    bool has_mode = false;
    for (const auto& [key, value] : root.items()) {
      if (key == "mode") {
        const std::string m = value.is_string() ? value.get<std::string>() : "";
        if (m == "simulate") c.mode = Mode::Simulate;
        else if (m == "align-pontryagin") c.mode = Mode::AlignPontryagin;
        else if (m == "align-bellman") c.mode = Mode::AlignBellman;
        else if (m == "align-homotopy") c.mode = Mode::AlignHomotopy;
        else fail(key, "mode must be simulate, align-pontryagin, align-bellman or align-homotopy");
        has_mode = true;
      } else if (key == "systems") {
        if (!value.is_array()) fail(key, "'systems' must be an array");
        for (const auto& s : value) c.systems.push_back(system(s));
      } else if (key == "x0") {
        if (!value.is_array() || value.empty()) fail(key, "'x0' must be a non-empty array");
        c.x0.resize(static_cast<Eigen::Index>(value.size()));
        for (std::size_t i = 0; i < value.size(); ++i)
          c.x0(static_cast<Eigen::Index>(i)) = number(value[i], key);
      } else if (key == "N") {
        c.N = integer(value, key);
      } else if (key == "dt") {
        c.dt = number(value, key);
      } else if (key == "plan") {
        if (!value.is_object()) fail(key, "'plan' must be an object");
        StagePlan p;
        for (const auto& [pk, pv] : value.items()) {
          if (pk == "stage_len") p.stage_len = integer(pv, pk);
          else if (pk == "num_stages") p.num_stages = integer(pv, pk);
          else fail(pk, "unknown plan field '" + pk + "'");
        }
        c.plan = p;
      } else if (key == "tau") {
        c.tau = number(value, key);
      } else if (key == "tol") {
        c.tol = number(value, key);
      } else if (key == "max_iter") {
        c.max_iter = static_cast<int>(integer(value, key));
      } else if (key == "seed") {
        if (!value.is_number_unsigned()) fail(key, "'seed' must be a non-negative integer");
        c.seed = value.get<std::uint64_t>();
      } else if (key == "output_dir") {
        if (!value.is_string()) fail(key, "'output_dir' must be a string");
        c.output_dir = value.get<std::string>();
      } else if (key == "lambda") {
        if (!value.is_object()) fail(key, "'lambda' must be an object");
        for (const auto& [lk, lv] : value.items()) {
          if (lk == "init") c.lambda.init = pair(lv, lk);
          else if (lk == "lo") c.lambda.lo = pair(lv, lk);
          else if (lk == "hi") c.lambda.hi = pair(lv, lk);
          else if (lk == "tie") {
            if (!lv.is_boolean()) fail(lk, "'tie' must be true or false");
            c.lambda.tie = lv.get<bool>();
          } else {
            fail(lk, "unknown lambda field '" + lk + "'");
          }
        }
      } else {
        fail(key, "unknown field '" + key + "'");
      }
    }
    if (!has_mode) fail("", "missing 'mode'");
    try {
      validate(c);
    } catch (const ConfigError& e) {
      // validate() does not know the text; point at the field it names.
      const std::string msg = e.what();
      const auto q = msg.find('\'');
      const auto q2 = q == std::string::npos ? q : msg.find('\'', q + 1);
      fail(q2 == std::string::npos ? "" : msg.substr(q + 1, q2 - q - 1), msg);
    }
    return c;
  }

 private:
  const std::string& text_;
  std::string source_;
};

bool in_unit(const LambdaPair& p) {
  return p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  return ConfigReader(text, source).config();
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ":1: cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate(const ExperimentConfig& c) {
  const std::size_t want = c.mode == Mode::Simulate ? 1 : 2;
  if (c.systems.size() != want)
    throw ConfigError("'systems' must list " + std::to_string(want) + " system(s) for mode " +
                      to_string(c.mode));
  std::vector<System> systems;
  for (const auto& d : c.systems) systems.push_back(build_system(d));
  for (const auto& s : systems)
    if (s.dim() != c.x0.size())
      throw ConfigError("'x0' has " + std::to_string(c.x0.size()) + " entries but system '" +
                        s.name() + "' has dimension " + std::to_string(s.dim()));
  if (!c.x0.allFinite()) throw ConfigError("'x0' must be finite");
  if (c.N < 1) throw ConfigError("'N' must be positive");
  if (!(c.dt > 0.0)) throw ConfigError("'dt' must be positive");
  if (!(c.tau >= 0.0)) throw ConfigError("'tau' must be non-negative");
  if (!(c.tol > 0.0)) throw ConfigError("'tol' must be positive");
  if (c.max_iter < 1) throw ConfigError("'max_iter' must be positive");

  if (c.mode == Mode::Simulate) {
    if (systems[0].is_hybrid() && !c.systems[0].lambda)
      throw ConfigError("'lambda' is required to simulate a hybrid system");
    return;
  }
  if (!c.plan) throw ConfigError("'plan' is required for mode " + to_string(c.mode));
  if (c.plan->stage_len < 1 || c.plan->num_stages < 1)
    throw ConfigError("'plan' counts must be positive");
  if (c.plan->total_steps() != c.N)
    throw ConfigError("'N' = " + std::to_string(c.N) + " but the plan covers " +
                      std::to_string(c.plan->total_steps()) + " steps");
  if (c.mode == Mode::AlignPontryagin) {
    for (std::size_t i = 0; i < 2; ++i)
      if (systems[i].is_hybrid() && !c.systems[i].lambda)
        throw ConfigError("'lambda' is required for a hybrid system in mode align-pontryagin");
  }
  if (c.mode == Mode::AlignBellman) {
    for (const auto& s : systems)
      if (s.is_hybrid()) throw ConfigError("'systems' must not be hybrid in mode align-bellman");
  }
  if (c.mode == Mode::AlignHomotopy) {
    const auto& l = c.lambda;
    if (!in_unit(l.init) || !in_unit(l.lo) || !in_unit(l.hi))
      throw ConfigError("'lambda' values must lie in [0, 1]");
    for (int i = 0; i < 2; ++i) {
      if (l.lo[i] > l.hi[i]) throw ConfigError("'lambda' lower bound above upper bound");
      if (l.init[i] < l.lo[i] || l.init[i] > l.hi[i])
        throw ConfigError("'lambda' init outside its bounds");
    }
  }
}

// ---------------------------------------------------------------------------
// Plot data

namespace {

std::vector<std::vector<double>> plane_rows(const PlotOrbits& o, int a, int b) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index k = 0; k < o.x.cols(); ++k)
    rows.push_back({static_cast<double>(k), o.x(a, k), o.x(b, k), o.ax(a, k), o.ax(b, k),
                    o.y(a, k), o.y(b, k)});
  return rows;
}

}  // namespace

void emit_plot_data(const std::vector<StageReport>& reports, const std::vector<double>& cumulative,
                    const PlotOrbits& orbits, const fs::path& dir) {
  if (reports.empty()) return;
  if (orbits.x.rows() != orbits.ax.rows() || orbits.x.rows() != orbits.y.rows() ||
      orbits.x.cols() != orbits.ax.cols() || orbits.x.cols() != orbits.y.cols())
    throw DimensionError("plot orbits differ in shape");

  write_trajectory_csv(dir / "orbit_x.csv", orbits.x);
  write_trajectory_csv(dir / "orbit_ax.csv", orbits.ax);
  write_trajectory_csv(dir / "orbit_y.csv", orbits.y);

  const Eigen::Index n = orbits.x.rows();
  if (n >= 2) {
    const char* names[] = {"xy", "xz", "yz"};
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int p = 0; p < 3; ++p) {
      const int a = pairs[p][0], b = pairs[p][1];
      if (b >= n) continue;
      const std::string sa = std::to_string(a + 1), sb = std::to_string(b + 1);
      write_csv(dir / ("plane_" + std::string(names[p]) + ".csv"),
                {"k", "x" + sa, "x" + sb, "ax" + sa, "ax" + sb, "y" + sa, "y" + sb},
                plane_rows(orbits, a, b));
    }
  }

  std::vector<std::vector<double>> rho_rows;
  for (const auto& r : reports) rho_rows.push_back({static_cast<double>(r.index), r.rho});
  write_csv(dir / "stage_rho.csv", {"stage", "rho"}, rho_rows);
  if (!cumulative.empty()) write_cumulative_csv(dir / "cumulative.csv", cumulative);

  std::vector<std::string> header{"k"};
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("actual" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("simulated" + std::to_string(i + 1));
  std::vector<std::vector<double>> rows;
  for (Eigen::Index k = 0; k < orbits.x.cols(); ++k) {
    std::vector<double> row{static_cast<double>(k)};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(orbits.y(i, k));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(orbits.ax(i, k));
    rows.push_back(std::move(row));
  }
  write_csv(dir / "series.csv", header, rows);
}

// ---------------------------------------------------------------------------
// Runs

namespace {

std::optional<double> own_lambda(const System& s, const SystemDescriptor& d) {
  if (s.is_hybrid()) return d.lambda;
  return std::nullopt;
}

json stats(const std::vector<StageReport>& stages, const std::vector<double>& curve) {
  std::vector<double> rho;
  int converged = 0;
  for (const auto& r : stages) {
    rho.push_back(r.rho);
    converged += r.converged ? 1 : 0;
  }
  std::sort(rho.begin(), rho.end());
  const std::size_t n = rho.size();
  const double median = n % 2 ? rho[n / 2] : 0.5 * (rho[n / 2 - 1] + rho[n / 2]);
  bool monotone = true;
  for (std::size_t m = 1; m < curve.size(); ++m)
    if (curve[m] < curve[m - 1] - 1e-12) monotone = false;

  json j;
  j["stages"] = n;
  j["converged_stages"] = converged;
  j["stage_rho"] = {{"min", rho.front()}, {"median", median}, {"max", rho.back()}};
  j["stages_below_0_9"] = std::count_if(rho.begin(), rho.end(), [](double r) { return r < 0.9; });
  j["baseline_rho"] = curve.front();
  j["final_rho"] = curve.back();
  j["cumulative_non_decreasing"] = monotone;
  return j;
}

json header(const ExperimentConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  json names = json::array();
  for (const auto& d : c.systems) names.push_back(build_system(d).name());
  j["systems"] = names;
  j["N"] = c.N;
  j["dt"] = c.dt;
  if (c.plan) j["plan"] = {{"stage_len", c.plan->stage_len}, {"num_stages", c.plan->num_stages}};
  j["tau"] = c.tau;
  j["tol"] = c.tol;
  j["seed"] = c.seed;
  return j;
}

void write_outputs(const ExperimentConfig& c, const std::vector<StageReport>& stages,
                   const std::vector<double>& curve, const PlotOrbits& orbits) {
  write_trajectory_csv(c.output_dir / "trajectory_x.csv", orbits.x);
  write_trajectory_csv(c.output_dir / "trajectory_y.csv", orbits.y);
  write_stage_reports(c.output_dir / "stages.json", stages);
  write_cumulative_csv(c.output_dir / "cumulative.csv", curve);
  emit_plot_data(stages, curve, orbits, c.output_dir / "plot");
}

// A x_k with each stage's own matrix; boundary columns take the later stage.
Eigen::MatrixXd stagewise_image(const std::vector<StageReport>& stages, const Eigen::MatrixXd& x,
                                Eigen::Index len) {
  Eigen::MatrixXd ax(x.rows(), x.cols());
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const Eigen::Index start = static_cast<Eigen::Index>(s) * len;
    ax.middleCols(start, len + 1) = stages[s].A.entries() * x.middleCols(start, len + 1);
  }
  return ax;
}

json run_pontryagin(const ExperimentConfig& c) {
  const System xs = build_system(c.systems[0]), ys = build_system(c.systems[1]);
  const Trajectory X = simulate(xs, c.x0, c.N, c.dt, own_lambda(xs, c.systems[0]));
  const Trajectory Y = simulate(ys, c.x0, c.N, c.dt, own_lambda(ys, c.systems[1]));
  const auto stages = pontryagin_align(X, Y, *c.plan, c.tau);
  const SimilarityMatrix baseline = closed_form_align(X, Y, c.tau);
  const auto curve = decoupled_cumulative(stages, baseline, X, Y);
  const PlotOrbits orbits{X.states, stagewise_image(stages, X.states, c.plan->stage_len), Y.states};
  write_outputs(c, stages, curve, orbits);
  return stats(stages, curve);
}

json run_bellman(const ExperimentConfig& c) {
  const System xs = build_system(c.systems[0]), ys = build_system(c.systems[1]);
  const BellmanResult r =
      bellman_dp(xs, ys, c.x0, *c.plan, c.dt, SolverOptions{c.tol, c.max_iter, kDefaultBound});
  const Eigen::Index len = c.plan->stage_len;
  Eigen::MatrixXd y(r.x.dim(), r.x.steps() + 1);
  for (std::size_t s = 0; s < r.stages.size(); ++s) {
    const Eigen::Index start = static_cast<Eigen::Index>(s) * len;
    y.middleCols(start, len + 1) =
        simulate(ys, r.stages[s].A.entries() * r.x.state(start), len, c.dt).states;
  }
  const PlotOrbits orbits{r.x.states, stagewise_image(r.stages, r.x.states, len), y};
  write_outputs(c, r.stages, r.cumulative, orbits);
  json j = stats(r.stages, r.cumulative);
  j["baseline_converged"] = r.baseline_diagnostics.converged;
  j["baseline_residual_norm"] = r.baseline_diagnostics.residual_norm;
  return j;
}

json run_homotopy(const ExperimentConfig& c) {
  const System H1 = build_system(c.systems[0]), H2 = build_system(c.systems[1]);
  JointOptions opt;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  opt.inner_max_iter = c.max_iter;
  opt.lambda_lo = c.lambda.lo;
  opt.lambda_hi = c.lambda.hi;
  opt.tie_lambda = c.lambda.tie;
  const HomotopyResult r = homotopy_dp(H1, H2, c.x0, *c.plan, c.dt, opt, c.lambda.init);
  const PlotOrbits orbits{r.x, r.simulated, r.actual};
  write_outputs(c, r.stages, r.cumulative, orbits);
  write_homotopy_csv(c.output_dir / "homotopy.csv", r.stages);
  json j = stats(r.stages, r.cumulative);
  double lo = 1.0, hi = 0.0;
  for (const auto& s : r.stages)
    for (double l : *s.lambda) {
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
  j["lambda_range"] = {lo, hi};
  return j;
}

}  // namespace

json run(const ExperimentConfig& config) {
  validate(config);
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError(config.output_dir.string() + ": " + ec.message());

  json summary = header(config);
  if (config.mode == Mode::Simulate) {
    const System s = build_system(config.systems[0]);
    const Trajectory t = simulate(s, config.x0, config.N, config.dt, own_lambda(s, config.systems[0]));
    write_trajectory_csv(config.output_dir / "trajectory.csv", t.states);
    json last = json::array();
    for (Eigen::Index i = 0; i < t.dim(); ++i) last.push_back(t.states(i, t.steps()));
    summary["final_state"] = last;
  } else {
    json body = config.mode == Mode::AlignPontryagin ? run_pontryagin(config)
                : config.mode == Mode::AlignBellman  ? run_bellman(config)
                                                     : run_homotopy(config);
    summary.update(body);
  }
  write_json(config.output_dir / "summary.json", summary);
  return summary;
}

// ---------------------------------------------------------------------------
// Recipes

const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names{"example4.1", "example4.2", "example4.3",
                                              "example4.4", "example4.5"};
  return names;
}

std::vector<std::pair<std::string, ExperimentConfig>> recipe_configs(const std::string& name,
                                                                     const fs::path& out) {
  const auto base = [](Mode mode, SystemDescriptor x, SystemDescriptor y, Eigen::Index N,
                       StagePlan plan) {
    ExperimentConfig c;
    c.mode = mode;
    c.systems = {std::move(x), std::move(y)};
    c.x0 = Eigen::VectorXd::Constant(3, 0.1);
    c.N = N;
    c.dt = 0.01;
    c.plan = plan;
    return c;
  };
  const SystemDescriptor lorenz{"lorenz", {}, {}, std::nullopt};
  std::vector<std::pair<std::string, ExperimentConfig>> runs;

  if (name == "example4.1" || name == "example4.2") {
    const SystemDescriptor y{name == "example4.1" ? "chua" : "rossler", {}, {}, std::nullopt};
    for (const auto& [sub, tau] : {std::pair<std::string, double>{"tau_0", 0.0}, {"tau_1e-4", 1e-4}}) {
      ExperimentConfig c = base(Mode::AlignPontryagin, lorenz, y, 2000, StagePlan{10, 200});
      c.tau = tau;
      c.output_dir = out / sub;
      runs.emplace_back(sub, c);
    }
  } else if (name == "example4.3" || name == "example4.4") {
    const SystemDescriptor y{name == "example4.3" ? "chen" : "lu", {}, {}, std::nullopt};
    ExperimentConfig c = base(Mode::AlignBellman, lorenz, y, 2000, StagePlan{10, 200});
    c.output_dir = out;
    runs.emplace_back("", c);
  } else if (name == "example4.5") {
    const SystemDescriptor hybrid{"", {}, {{"chua", {}, {}, std::nullopt}, lorenz}, std::nullopt};
    for (double u : {-1.0, 8.0, 12.0, -12.0}) {
      const SystemDescriptor lu{"lu", {{"u", u}}, {}, std::nullopt};
      ExperimentConfig c = base(Mode::AlignHomotopy, hybrid, lu, 1000, StagePlan{5, 200});
      std::ostringstream sub;
      sub << "u_" << u;
      c.output_dir = out / sub.str();
      runs.emplace_back(sub.str(), c);
    }
  } else {
    throw ConfigError("unknown recipe '" + name + "'");
  }
  return runs;
}

json run_recipe(const std::vector<std::pair<std::string, ExperimentConfig>>& runs,
                const std::string& name, const fs::path& out) {
  if (runs.size() == 1) {
    json s = run(runs.front().second);
    s["recipe"] = name;
    write_json(runs.front().second.output_dir / "summary.json", s);
    return s;
  }
  json combined;
  combined["recipe"] = name;
  for (const auto& [sub, cfg] : runs) combined["variants"][sub] = run(cfg);
  write_json(out / "summary.json", combined);
  return combined;
}

}  // namespace orbsim
