// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "orbsim/homotopy.hpp"
#include "orbsim/similarity.hpp"
#include "orbsim/staging.hpp"

using namespace orbsim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

VectorXd start() { return VectorXd::Constant(3, 0.1); }

const std::vector<std::string> kNames{"lorenz", "chua", "rossler", "chen", "lu"};

std::string pick() { return kNames[static_cast<std::size_t>(oracle::uniform(0, 5)) % 5]; }

bool non_decreasing(const std::vector<double>& c) {
  for (std::size_t m = 1; m < c.size(); ++m)
    if (c[m] < c[m - 1] - 1e-12) return false;
  return true;
}

Outcome oracle_recovery() {
  Outcome o;
  double worst_err = 0, worst_omega = 0, worst_rho = 1;
  for (int t = 0; t < 100; ++t) {
    const MatrixXd star = oracle::random_well_conditioned(3);
    const MatrixXd X = oracle::random_matrix(3, 21, -10, 10);
    const MatrixXd Y = star * X;
    const SimilarityMatrix A = closed_form_align(X, Y, 0.0);
    const double omega = mean_sq_misfit(A.entries(), X, Y);
    worst_err = std::max(worst_err, (A.entries() - star).cwiseAbs().maxCoeff());
    worst_omega = std::max(worst_omega, omega);
    worst_rho = std::min(worst_rho, similarity_degree(omega));
  }
  o.require(worst_err < 1e-8, "max entry error < 1e-8");
  o.require(worst_omega < 1e-12, "omega < 1e-12");
  o.require(worst_rho >= 1.0 - 1e-12, "rho = 1");
  o.detail << "100 instances, max entry error " << worst_err << ", max omega " << worst_omega;
  return o;
}

Outcome gradient_checks() {
  Outcome o;
  const int instances = 20;
  double worst_dec = 0, worst_cpl = 0, worst_lam = 0;
  for (int t = 0; t < instances; ++t) {
    const MatrixXd A = MatrixXd::Identity(3, 3) + 0.3 * oracle::random_matrix(3, 3);
    const MatrixXd X = oracle::random_matrix(3, 6), Y = oracle::random_matrix(3, 6);
    const double tau = oracle::uniform(0, 1e-2);
    const auto Jd = [&](const MatrixXd& M) { return oracle::naive_cost(M, X, Y, tau); };
    worst_dec = std::max(worst_dec, oracle::rel_err(decoupled_gradient(A, X, Y, tau), oracle::fd_gradient(Jd, A, 1e-5)));

    const int len = 1 + t % 5;
    const std::string xn = pick(), yn = pick();
    const VectorXd x0 = oracle::random_matrix(3, 1, -3, 3);
    const auto Jc = [&](const MatrixXd& M) {
      const MatrixXd xs = oracle::orbit(oracle::by_name(xn), oracle::to3(x0), len, 0.01);
      const MatrixXd ys = oracle::orbit(oracle::by_name(yn), oracle::to3(M * x0), len, 0.01);
      return oracle::naive_cost(M, xs, ys, 0.0);
    };
    const MatrixXd R = coupled_residual(SimilarityMatrix(A), x0, make_system(xn), make_system(yn), len, 0.01);
    worst_cpl = std::max(worst_cpl, oracle::rel_err(R, 0.5 * oracle::fd_gradient(Jc, A, 1e-6)));

    const std::string f1 = pick(), g1 = pick(), f2 = pick(), g2 = pick();
    const System H1 = make_hybrid(make_system(f1), make_system(g1));
    const System H2 = make_hybrid(make_system(f2), make_system(g2));
    const double l1 = oracle::uniform(0.05, 0.95), l2 = oracle::uniform(0.05, 0.95);
    const auto Jl = [&](double a, double b) {
      const auto fx = oracle::blend(oracle::by_name(f1), oracle::by_name(g1), a);
      const auto fy = oracle::blend(oracle::by_name(f2), oracle::by_name(g2), b);
      const MatrixXd xs = oracle::orbit(fx, oracle::to3(x0), len, 0.01);
      const MatrixXd ys = oracle::orbit(fy, oracle::to3(A * x0), len, 0.01);
      return oracle::naive_cost(A, xs, ys, 0.0);
    };
    const double h = 1e-6;
    const Eigen::Vector2d fd((Jl(l1 + h, l2) - Jl(l1 - h, l2)) / (4 * h), (Jl(l1, l2 + h) - Jl(l1, l2 - h)) / (4 * h));
    const KktResidual k = kkt_residual({SimilarityMatrix(A), {l1, l2}, 0, 0}, x0, H1, H2, len, 0.01);
    worst_lam = std::max(worst_lam, oracle::rel_err(k.lambda, fd));
  }
  o.require(worst_dec < 1e-4, "decoupled gradient");
  o.require(worst_cpl < 1e-4, "coupled residual");
  o.require(worst_lam < 1e-4, "kkt lambda residual");
  o.detail << instances << " instances each, worst relative errors " << worst_dec << ", " << worst_cpl << ", " << worst_lam;
  return o;
}

Outcome sensitivity_checks() {
  Outcome o;
  double worst = 0;
  const double h = 1e-6;
  for (const auto& name : kNames) {
    const System s = make_system(name);
    const Trajectory t = simulate(s, start(), 10, 0.01);
    const auto S = propagate_sensitivity(s, t, MatrixXd::Identity(3, 3), SensitivityMode::StateSeeded);
    for (int k : {5, 10}) {
      MatrixXd fd(3, 3);
      for (int j = 0; j < 3; ++j) {
        VectorXd p = start(), m = start();
        p(j) += h;
        m(j) -= h;
        const auto a = oracle::orbit_state(oracle::by_name(name), oracle::to3(p), k, 0.01);
        const auto b = oracle::orbit_state(oracle::by_name(name), oracle::to3(m), k, 0.01);
        for (int i = 0; i < 3; ++i) fd(i, j) = (a[i] - b[i]) / (2 * h);
      }
      worst = std::max(worst, oracle::rel_err(S[static_cast<std::size_t>(k)], fd));
    }
  }
  const System hyb = make_hybrid(make_system("lorenz"), make_system("chua"));
  const double lambda = 0.3;
  const Trajectory t = simulate(hyb, start(), 10, 0.01, lambda);
  const auto S = propagate_sensitivity(hyb, t, MatrixXd::Identity(3, 3), SensitivityMode::StateSeeded);
  const auto s = propagate_sensitivity(hyb, t, MatrixXd::Zero(3, 1), SensitivityMode::LambdaForced);
  for (int k : {5, 10}) {
    MatrixXd fd(3, 3);
    const auto f = oracle::blend(oracle::lorenz, oracle::chua, lambda);
    for (int j = 0; j < 3; ++j) {
      VectorXd p = start(), m = start();
      p(j) += h;
      m(j) -= h;
      const auto a = oracle::orbit_state(f, oracle::to3(p), k, 0.01), b = oracle::orbit_state(f, oracle::to3(m), k, 0.01);
      for (int i = 0; i < 3; ++i) fd(i, j) = (a[i] - b[i]) / (2 * h);
    }
    worst = std::max(worst, oracle::rel_err(S[static_cast<std::size_t>(k)], fd));
    const auto a = oracle::orbit_state(oracle::blend(oracle::lorenz, oracle::chua, lambda + h), oracle::to3(start()), k, 0.01);
    const auto b = oracle::orbit_state(oracle::blend(oracle::lorenz, oracle::chua, lambda - h), oracle::to3(start()), k, 0.01);
    VectorXd fl(3);
    for (int i = 0; i < 3; ++i) fl(i) = (a[i] - b[i]) / (2 * h);
    worst = std::max(worst, oracle::rel_err(s[static_cast<std::size_t>(k)], fl));
  }
  o.require(worst < 1e-4, "relative error < 1e-4");
  o.detail << "5 catalog systems + hybrid, k in {5, 10}, worst relative error " << worst;
  return o;
}

Outcome degree_properties() {
  Outcome o;
  o.require(similarity_degree(0.0) == 1.0, "rho(0) = 1");
  std::vector<double> omegas;
  for (int t = 0; t < 1000; ++t) omegas.push_back(std::pow(10.0, oracle::uniform(-10, 12)));
  std::sort(omegas.begin(), omegas.end());
  bool ok = true;
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const double r = similarity_degree(omegas[i]);
    if (!(r > 0.0 && r <= 1.0)) ok = false;
    if (i > 0 && omegas[i] > omegas[i - 1] && !(r < similarity_degree(omegas[i - 1]))) ok = false;
  }
  o.require(ok, "strictly decreasing within (0, 1]");
  const double e = std::exp(1.0);
  const double err = std::abs(similarity_degree(e - 1) - 1 / (e - 1));
  o.require(err <= 1e-12, "rho(e - 1) = 1/(e - 1)");
  o.detail << "1000 sampled omegas, |rho(e-1) - 1/(e-1)| = " << err;
  return o;
}

Outcome decoupled_example(const std::string& y_name) {
  Outcome o;
  const Trajectory X = simulate(make_system("lorenz"), start(), 2000, 0.01);
  const Trajectory Y = simulate(make_system(y_name), start(), 2000, 0.01);
  const StagePlan plan{10, 200};
  const auto count_below = [](const std::vector<StageReport>& rs, double level) {
    int n = 0;
    for (const auto& r : rs) n += r.rho < level ? 1 : 0;
    return n;
  };
  if (y_name == "chua") {
    const auto reg = pontryagin_align(X, Y, plan, 1e-4);
    const auto plain = pontryagin_align(X, Y, plan, 0.0);
    const int below = count_below(reg, 0.9);
    const auto above = std::count_if(plain.begin(), plain.end(), [](const StageReport& r) { return r.rho > 0.9; });
    o.require(below <= 10, "tau = 1e-4: at most 10 stages below 0.9");
    o.require(above > 100, "tau = 0: majority above 0.9");
    o.detail << "tau=1e-4: " << below << " of 200 below 0.9; tau=0: " << above << " of 200 above 0.9";
  } else {
    const auto reg = pontryagin_align(X, Y, plan, 1e-4);
    double lowest = 1;
    for (const auto& r : reg) lowest = std::min(lowest, r.rho);
    o.require(lowest > 0.95, "every stage above 0.95");
    o.detail << "tau=1e-4: lowest stage rho " << lowest;
  }
  return o;
}

Outcome bellman_example(const std::string& y_name) {
  Outcome o;
  const System y = y_name == "chen" ? make_system("chen") : make_system("lu", {{"u", 0.0}});
  const BellmanResult r = bellman_dp(make_system("lorenz"), y, start(), StagePlan{10, 200}, 0.01);
  const auto& c = r.cumulative;
  int converged = 0;
  double lowest = 1;
  for (const auto& s : r.stages) {
    converged += s.converged ? 1 : 0;
    lowest = std::min(lowest, s.rho);
  }
  o.require(non_decreasing(c), "cumulative curve non-decreasing");
  o.require(c.back() >= 0.999, "curve ends >= 0.999");
  if (y_name == "chen") {
    o.require(converged == 200, "every stage converged");
    o.require(lowest >= 0.9999, "every stage rho >= 0.9999");
    o.require(c.front() >= 0.97 && c.front() < 1.0, "curve starts in [0.97, 1)");
  }
  o.detail << converged << "/200 converged, lowest stage rho " << lowest << ", curve " << c.front() << " -> " << c.back();
  return o;
}

Outcome homotopy_example() {
  Outcome o;
  for (double u : {-1.0, 8.0, 12.0, -12.0}) {
    HomotopyResult r;
    try {
      r = example45_pipeline(u, 1000, StagePlan{5, 200});
    } catch (const std::exception& e) {
      o.require(false, "run completes");
      o.detail << "u=" << u << " threw: " << e.what() << "; ";
      continue;
    }
    bool in_box = true;
    int good = 0;
    for (const auto& s : r.stages) {
      for (double l : *s.lambda) in_box = in_box && l >= 0.0 && l <= 1.0;
      // omega is the mean squared gap between the stage's actual and
      // simulated sequences over its own steps 1..5.
      good += similarity_degree(s.omega) >= 0.99 ? 1 : 0;
    }
    const std::string tag = "u=" + std::to_string(static_cast<int>(u));
    o.require(r.stages.size() == 200, tag + " has 200 stages");
    o.require(in_box, tag + " lambda in [0,1]^2");
    o.require(non_decreasing(r.cumulative), tag + " cumulative non-decreasing");
    o.require(good >= 180, tag + " rho >= 0.99 in >= 90% of stages");
    o.detail << tag << ": " << good << "/200 stages rho >= 0.99, curve " << r.cumulative.front() << " -> " << r.cumulative.back() << "; ";
  }
  return o;
}

Outcome structural() {
  Outcome o;
  const System H1 = make_hybrid(make_system("chua"), make_system("lorenz"));
  const System H2 = make_system("lu", {{"u", -1.0}});
  double joint_gap = 0;
  for (double l : {0.0, 0.5, 1.0}) {
    JointOptions opt;
    opt.lambda_lo = opt.lambda_hi = {l, 0.5};
    const auto j = solve_joint(start(), H1, H2, 5, 0.01, SimilarityMatrix::identity(3), {l, 0.5}, opt);
    const CoupledProblem p{&H1, &H2, start(), 5, 0.01, l, std::nullopt};
    const auto c = solve_coupled(p, SimilarityMatrix::identity(3));
    joint_gap = std::max(joint_gap, (j.alignment.A.entries() - c.A.entries()).cwiseAbs().maxCoeff());
  }
  o.require(joint_gap <= 1e-10, "frozen solve_joint equals solve_coupled");

  const Trajectory X = simulate(make_system("lorenz"), start(), 2000, 0.01);
  const Trajectory Y = simulate(make_system("chua"), start(), 2000, 0.01);
  const auto one = pontryagin_align(X, Y, StagePlan{2000, 1}, 1e-4);
  const double stage_gap = (one[0].A.entries() - closed_form_align(X, Y, 1e-4).entries()).cwiseAbs().maxCoeff();
  o.require(stage_gap <= 1e-12, "single-stage alignment equals closed form");

  bool bitwise = true;
  for (const auto& f : kNames)
    for (const auto& g : kNames) {
      const System a = make_system(f), b = make_system(g), h = make_hybrid(a, b);
      for (int t = 0; t < 20; ++t) {
        const VectorXd s = oracle::random_matrix(3, 1, -30, 30);
        bitwise = bitwise && h.field(s, 0.0) == a.field(s) && h.field(s, 1.0) == b.field(s);
      }
    }
  o.require(bitwise, "hybrid endpoints bitwise");
  o.detail << "frozen gap " << joint_gap << ", single-stage gap " << stage_gap << ", endpoints bitwise " << (bitwise ? "yes" : "no");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "closed-form oracle recovery", 1, oracle_recovery},
      {2, "gradient and residual finite differences", 30, gradient_checks},
      {3, "sensitivity finite differences", 30, sensitivity_checks},
      {4, "similarity degree properties", 0, degree_properties},
      {5, "Lorenz vs Chua staged fit", 60, [] { return decoupled_example("chua"); }},
      {6, "Lorenz vs Rossler staged fit", 60, [] { return decoupled_example("rossler"); }},
      {7, "Lorenz to Chen dynamic programming", 300, [] { return bellman_example("chen"); }},
      {8, "Lorenz to Lu dynamic programming", 300, [] { return bellman_example("lu"); }},
      {9, "hybrid Chua-Lorenz vs controlled Lu", 600, homotopy_example},
      {10, "structural equivalences", 0, structural},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = c.check();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // A zero limit means the criterion states none.
    if (c.limit_seconds > 0) o.require(secs < c.limit_seconds, "runtime limit");
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2d %-42s %s  (%.2f s)  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs, o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
