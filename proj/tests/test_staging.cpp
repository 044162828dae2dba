#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "orbsim/errors.hpp"
#include "orbsim/staging.hpp"

using namespace orbsim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd start() { return VectorXd::Constant(3, 0.1); }

}  // namespace

TEST_CASE("stage plan arithmetic and validation") {
  const StagePlan p{10, 200};
  CHECK(p.total_steps() == 2000);
  CHECK(p.start(3) == 30);
  CHECK_NOTHROW(validate(p));
  CHECK_THROWS_AS(validate(StagePlan{0, 5}), ConfigError);
  CHECK_THROWS_AS(validate(StagePlan{5, -1}), ConfigError);
}

TEST_CASE("solve_coupled on self-alignment stops at once") {
  const System lorenz = make_system("lorenz");
  const CoupledSolution sol = solve_coupled(start(), lorenz, lorenz, 10, 0.01, SimilarityMatrix::identity(3));
  CHECK(sol.diagnostics.converged);
  CHECK(sol.diagnostics.iterations == 0);
  CHECK(sol.A.entries() == MatrixXd::Identity(3, 3));
}

TEST_CASE("solve_coupled reaches a stationary point on one stage") {
  const System lorenz = make_system("lorenz"), chen = make_system("chen");
  const CoupledProblem p{&lorenz, &chen, start(), 10, 0.01, std::nullopt, std::nullopt};
  const CoupledSolution sol = solve_stage(p);
  CHECK(sol.diagnostics.converged);
  CHECK(sol.diagnostics.residual_norm <= 1e-10);
  const MatrixXd R = coupled_residual(sol.A, start(), lorenz, chen, 10, 0.01);
  CHECK(R.norm() <= 1e-10);
  CHECK(stage_rho(p, sol.A.entries()) >= 0.9999);
  CHECK(sol.A.entries().cwiseAbs().maxCoeff() <= kDefaultBound);
}

TEST_CASE("solver rejects bad tolerances") {
  const System lorenz = make_system("lorenz");
  const CoupledProblem p{&lorenz, &lorenz, start(), 3, 0.01, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(solve_coupled(p, SimilarityMatrix::identity(3), SolverOptions{0.0, 10, kDefaultBound}), DomainError);
}

TEST_CASE("iterates respect a tight box") {
  const System lorenz = make_system("lorenz"), chen = make_system("chen");
  const CoupledProblem p{&lorenz, &chen, start(), 10, 0.01, std::nullopt, std::nullopt};
  const CoupledSolution sol = solve_coupled(p, SimilarityMatrix::identity(3, 1.0), SolverOptions{1e-10, 50, 1.0});
  CHECK(sol.A.bound() == 1.0);
  CHECK(sol.A.entries().cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("pontryagin windows") {
  const System lorenz = make_system("lorenz"), chua = make_system("chua");
  const Trajectory X = simulate(lorenz, start(), 200, 0.01);
  const Trajectory Y = simulate(chua, start(), 200, 0.01);

  SUBCASE("identical orbits give the identity everywhere") {
    for (const auto& r : pontryagin_align(X, X, StagePlan{10, 20}, 0.0)) {
      CHECK(oracle::rel_err(r.A.entries(), MatrixXd::Identity(3, 3)) < 1e-8);
      CHECK(r.rho == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(r.converged);
    }
  }
  SUBCASE("one window is the whole-horizon closed form") {
    const auto one = pontryagin_align(X, Y, StagePlan{200, 1}, 1e-4);
    REQUIRE(one.size() == 1);
    CHECK((one[0].A.entries() - closed_form_align(X, Y, 1e-4).entries()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("each window is an independent fit with the shared boundary") {
    const auto reports = pontryagin_align(X, Y, StagePlan{10, 20}, 1e-4);
    REQUIRE(reports.size() == 20);
    for (const auto& r : reports) {
      const auto xw = X.states.middleCols(r.index * 10, 11);
      const auto yw = Y.states.middleCols(r.index * 10, 11);
      CHECK(oracle::rel_err(r.A.entries(), closed_form_align(xw, yw, 1e-4).entries()) < 1e-13);
      const double omega = oracle::naive_cost(r.A.entries(), xw.rightCols(10), yw.rightCols(10), 0.0) / 10;
      CHECK(r.omega == doctest::Approx(omega).epsilon(1e-12));
      CHECK(r.rho == doctest::Approx(std::log1p(omega) / omega).epsilon(1e-12));
    }
  }
  SUBCASE("cumulative curve over windows") {
    const auto reports = pontryagin_align(X, Y, StagePlan{10, 20}, 0.0);
    const SimilarityMatrix base = closed_form_align(X, Y, 0.0);
    const auto curve = decoupled_cumulative(reports, base, X, Y);
    REQUIRE(curve.size() == 21);
    for (std::size_t m = 0; m <= 20; ++m) {
      double sum = 0;
      for (Eigen::Index k = 1; k <= 200; ++k) {
        const auto& A = (static_cast<std::size_t>((k - 1) / 10) < m) ? reports[static_cast<std::size_t>((k - 1) / 10)].A.entries() : base.entries();
        sum += (A * X.state(k) - Y.state(k)).squaredNorm();
      }
      CHECK(curve[m] == doctest::Approx(std::log1p(sum / 200) / (sum / 200)).epsilon(1e-12));
    }
    // Each window's own fit beats the global matrix on that window.
    for (std::size_t m = 1; m < curve.size(); ++m) CHECK(curve[m] >= curve[m - 1] - 1e-12);
  }
  CHECK_THROWS_AS(pontryagin_align(X, Y, StagePlan{10, 30}, 0.0), DimensionError);
}

TEST_CASE("bellman sweep on self-alignment") {
  const System lorenz = make_system("lorenz");
  const BellmanResult r = bellman_dp(lorenz, lorenz, start(), StagePlan{5, 6}, 0.01);
  for (const auto& s : r.stages) {
    CHECK(oracle::rel_err(s.A.entries(), MatrixXd::Identity(3, 3)) < 1e-8);
    CHECK(s.rho == doctest::Approx(1.0));
  }
  for (double c : r.cumulative) CHECK(c == doctest::Approx(1.0));
}

TEST_CASE("bellman sweep selection rule and cumulative curve") {
  const System lorenz = make_system("lorenz"), chen = make_system("chen");
  const StagePlan plan{10, 12};
  const BellmanResult r = bellman_dp(lorenz, chen, start(), plan, 0.01);
  REQUIRE(r.stages.size() == 12);
  REQUIRE(r.cumulative.size() == 13);
  CHECK(r.x.states.cols() == 121);

  for (const auto& s : r.stages) {
    CAPTURE(s.index);
    CHECK(s.converged);
    REQUIRE(s.candidate_rho);
    if (s.index == 0) {
      CHECK_FALSE(s.previous_rho);
      CHECK(s.rho == *s.candidate_rho);
    } else {
      REQUIRE(s.previous_rho);
      CHECK(s.rho == std::max(*s.candidate_rho, *s.previous_rho));
      CHECK(s.adopted_previous == (*s.previous_rho > *s.candidate_rho));
    }
    CHECK(s.rho == doctest::Approx(similarity_degree(s.omega)).epsilon(1e-14));
    CHECK(s.rho >= 0.9999);
    CHECK(s.A.entries().cwiseAbs().maxCoeff() <= kDefaultBound);
  }

  // Independent recomputation of the curve with the reference integrator.
  const MatrixXd xs = oracle::orbit(oracle::lorenz, oracle::to3(start()), 120, 0.01);
  for (std::size_t m = 0; m <= 12; ++m) {
    double sum = 0;
    for (Eigen::Index s = 0; s < 12; ++s) {
      const MatrixXd& A = static_cast<std::size_t>(s) < m ? r.stages[static_cast<std::size_t>(s)].A.entries() : r.baseline.entries();
      const MatrixXd ys = oracle::orbit(oracle::chen, oracle::to3(A * xs.col(s * 10)), 10, 0.01);
      for (int k = 1; k <= 10; ++k) sum += (A * xs.col(s * 10 + k) - ys.col(k)).squaredNorm();
    }
    const double omega = sum / 120;
    CHECK(r.cumulative[m] == doctest::Approx(std::log1p(omega) / omega).epsilon(1e-9));
    CHECK(cumulative_similarity(r.stages, r.baseline, r.x, chen, static_cast<Eigen::Index>(m)) == r.cumulative[m]);
  }
  for (std::size_t m = 1; m < r.cumulative.size(); ++m) CHECK(r.cumulative[m] >= r.cumulative[m - 1] - 1e-12);
  CHECK_THROWS_AS(cumulative_similarity(r.stages, r.baseline, r.x, chen, 13), DomainError);
}

TEST_CASE("default start falls back to the identity") {
  const System lorenz = make_system("lorenz");
  // A constant orbit has a rank-one Gram matrix.
  const VectorXd fixed = VectorXd::Zero(3);
  const CoupledProblem p{&lorenz, &lorenz, fixed, 5, 0.01, std::nullopt, std::nullopt};
  CHECK(default_initial_matrix(p).entries() == MatrixXd::Identity(3, 3));
}
