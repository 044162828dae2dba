#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "orbsim/integrator.hpp"
#include "orbsim/similarity.hpp"
#include "orbsim/systems.hpp"

namespace orbsim {

/// Splits a horizon of stage_len * num_stages steps into equal windows.
struct StagePlan {
  Eigen::Index stage_len = 10;
  Eigen::Index num_stages = 200;

  Eigen::Index total_steps() const { return stage_len * num_stages; }
  /// Index of the first state of `stage`.
  Eigen::Index start(Eigen::Index stage) const { return stage * stage_len; }
};

/// Throws ConfigError unless both counts are positive.
void validate(const StagePlan& plan);

struct SolverOptions {
  /// Stop when the Frobenius norm of the optimality residual is at most tol.
  double tol = 1e-10;
  int max_iter = 200;
  double bound = kDefaultBound;
};

struct SolveDiagnostics {
  double residual_norm = 0.0;
  double cost = 0.0;
  int iterations = 0;
  int newton_steps = 0;
  int lm_steps = 0;
  int gradient_steps = 0;
  bool converged = false;
};

struct CoupledSolution {
  SimilarityMatrix A;
  SolveDiagnostics diagnostics;
};

/// Finds a stationary point of the coupled cost. Each iteration tries, in
/// order: a full Newton step on the optimality residual (finite-difference
/// Newton matrix over the n^2 entries), a Levenberg-Marquardt step on the
/// cost, and a backtracking gradient step. Iterates are clamped onto the
/// box. Returns the iterate with the smallest residual.
CoupledSolution solve_coupled(const CoupledProblem& problem, const SimilarityMatrix& A_init,
                              const SolverOptions& options = {});

CoupledSolution solve_coupled(const Eigen::VectorXd& x0, const System& x_system,
                              const System& y_system, Eigen::Index stage_len, double dt,
                              const SimilarityMatrix& A_init, double tol = 1e-10,
                              int max_iter = 200);

/// Closed-form fit between the two systems simulated from the same initial
/// state over the stage; the identity if that fit is rank deficient or
/// sends the orbit from A x0 past the overflow guard.
SimilarityMatrix default_initial_matrix(const CoupledProblem& problem,
                                        double bound = kDefaultBound);

/// solve_coupled from default_initial_matrix, then from the identity and
/// from zero until one converges; keeps the smallest residual. Starts whose
/// orbit overflows are skipped. Iterations add up over the attempts.
CoupledSolution solve_stage(const CoupledProblem& problem, const SolverOptions& options = {});

struct StageReport {
  Eigen::Index index = 0;
  SimilarityMatrix A;
  double rho = 1.0;
  double omega = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  // Selection diagnostics; set by the dynamic-programming sweep.
  std::optional<double> candidate_rho;
  std::optional<double> previous_rho;
  bool adopted_previous = false;

  // Embedding parameters, set for homotopy stages.
  std::optional<std::array<double, 2>> lambda;
  double kkt_lambda_norm = 0.0;
};

/// Fits an independent matrix to each window of two observed orbits with
/// closed_form_align. Windows share their boundary state. rho is computed
/// over the window; residual_norm is the norm of the decoupled gradient
/// relative to ||2 Y X^T||, and converged means it is below 1e-8.
std::vector<StageReport> pontryagin_align(const Trajectory& X, const Trajectory& Y,
                                          const StagePlan& plan, double tau,
                                          double bound = kDefaultBound);

/// Sum over steps 1..L of ||A x_k - y_k||^2 on one stage, where x runs from
/// `boundary` under x_system and y from A * boundary under y_system.
double stage_misfit_sum(const Eigen::MatrixXd& A, const Eigen::VectorXd& boundary,
                        const System& x_system, const System& y_system,
                        Eigen::Index stage_len, double dt,
                        std::optional<double> x_lambda = std::nullopt,
                        std::optional<double> y_lambda = std::nullopt);

/// rho of one stage of the coupled problem.
double stage_rho(const CoupledProblem& problem, const Eigen::MatrixXd& A);

/// Cumulative curve for observed orbits: entry m is the global rho over
/// steps 1..N of every window when windows 0..m-1 use their own matrices and
/// the rest use `baseline`. Windows are those of pontryagin_align.
std::vector<double> decoupled_cumulative(const std::vector<StageReport>& stages,
                                         const SimilarityMatrix& baseline, const Trajectory& X,
                                         const Trajectory& Y);

struct BellmanResult {
  std::vector<StageReport> stages;
  /// cumulative[m] for m = 0..num_stages.
  std::vector<double> cumulative;
  SimilarityMatrix baseline;
  SolveDiagnostics baseline_diagnostics;
  Trajectory x;
};

/// Stagewise coupled alignment. Stage s starts from the x state at its
/// boundary with y_0 = A x_b; the candidate from solve_coupled competes with
/// the previous stage's matrix on rho over the current stage, and the larger
/// wins. The baseline is solve_coupled over the whole horizon.
BellmanResult bellman_dp(const System& x_system, const System& y_system,
                         const Eigen::VectorXd& x0, const StagePlan& plan, double dt,
                         const SolverOptions& options = {});

/// Global rho over the horizon of X_full when stages 0..m-1 use their
/// adopted matrices and the remaining stages use `baseline`, with Y
/// regenerated per stage from A x_b.
double cumulative_similarity(const std::vector<StageReport>& stages,
                             const SimilarityMatrix& baseline, const Trajectory& X_full,
                             const System& y_system, Eigen::Index m);

}  // namespace orbsim
