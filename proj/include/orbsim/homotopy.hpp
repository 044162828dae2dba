#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "orbsim/integrator.hpp"
#include "orbsim/similarity.hpp"
#include "orbsim/staging.hpp"
#include "orbsim/systems.hpp"

namespace orbsim {

using LambdaPair = std::array<double, 2>;

/// A matrix together with the embedding parameters of the two orbits:
/// lambda[0] drives the x system, lambda[1] the y system. The component of
/// a plain (non-hybrid) system is carried along but never used.
struct HomotopyAlignment {
  SimilarityMatrix A;
  LambdaPair lambda{0.5, 0.5};
  double kkt_A_norm = 0.0;
  double kkt_lambda_norm = 0.0;
};

struct KktResidual {
  /// One half of dJ/dA; the coupled residual at the candidate's lambdas.
  Eigen::MatrixXd A;
  /// One half of dJ/dlambda_i with A held fixed. Zero for plain systems.
  Eigen::Vector2d lambda;
};

/// Optimality residuals of the joint cost at a candidate. X runs from x0
/// under H1(lambda1), Y from A x0 under H2(lambda2). Throws DomainError when
/// a lambda is outside [0, 1] and OverflowError if an orbit escapes.
KktResidual kkt_residual(const HomotopyAlignment& candidate, const Eigen::VectorXd& x0,
                         const System& H1, const System& H2, Eigen::Index stage_len, double dt);

/// sum_{k=0..L} ||A x_k - y_k||^2 at the candidate's lambdas.
double joint_cost(const HomotopyAlignment& candidate, const Eigen::VectorXd& x0,
                  const System& H1, const System& H2, Eigen::Index stage_len, double dt);

struct JointOptions {
  double tol = 1e-10;
  int max_iter = 200;
  double bound = kDefaultBound;
  /// Box for lambda; lo == hi freezes a component.
  LambdaPair lambda_lo{0.0, 0.0};
  LambdaPair lambda_hi{1.0, 1.0};
  /// Move both components together as one parameter.
  bool tie_lambda = false;
  /// Iteration cap of each inner matrix solve.
  int inner_max_iter = 200;
};

struct JointDiagnostics {
  int iterations = 0;
  int lambda_steps = 0;
  int inner_iterations = 0;
  double cost = 0.0;
  bool converged = false;
};

struct JointSolution {
  HomotopyAlignment alignment;
  JointDiagnostics diagnostics;
};

/// Alternates solve_coupled for A at fixed lambda with a projected
/// backtracking step on lambda along -dJ/dlambda. Each trial lambda gets A
/// re-solved from the current matrix and must pass an Armijo test on that
/// cost; the first trial step is 0.1 (later a Barzilai-Borwein estimate),
/// halved up to 30 times. Stops when the A residual and the projected
/// lambda residual are both within tol. kkt_lambda_norm is the
/// projected norm: at an active bound only the component pointing into the
/// box counts.
JointSolution solve_joint(const Eigen::VectorXd& x0, const System& H1, const System& H2,
                          Eigen::Index stage_len, double dt, const SimilarityMatrix& A_init,
                          LambdaPair lambda_init = {0.5, 0.5}, const JointOptions& options = {});

struct HomotopyResult {
  std::vector<StageReport> stages;
  /// cumulative[m] for m = 0..num_stages.
  std::vector<double> cumulative;
  HomotopyAlignment baseline;
  JointDiagnostics baseline_diagnostics;
  /// x orbit under H1(lambda_init); stage s starts from its column s * L.
  Trajectory reference;
  /// Stagewise x orbit (each stage under its adopted lambda1). In this and
  /// the two sequences below, a column shared by two stages holds the
  /// later stage's first state.
  Eigen::MatrixXd x;
  /// y_k regenerated per stage from A x_b: the actual sequence.
  Eigen::MatrixXd actual;
  /// A x_k per stage: the simulated sequence.
  Eigen::MatrixXd simulated;
};

/// Stagewise joint alignment. Each stage starts from the reference x orbit
/// at its boundary, warm-starts lambda from the previous adopted value, and
/// keeps whichever of the candidate and the previous (A, lambda) has the
/// larger rho on the stage. The baseline is solve_joint over the whole
/// horizon with lambda frozen at lambda_init; cumulative[m] uses adopted
/// stages 0..m-1 and the baseline on the rest, each evaluated from the
/// reference boundary states.
HomotopyResult homotopy_dp(const System& H1, const System& H2, const Eigen::VectorXd& x0,
                           const StagePlan& plan, double dt, const JointOptions& options = {},
                           LambdaPair lambda_init = {0.5, 0.5});

/// Hybrid Chua-Lorenz (lambda on the Lorenz field) against Lu with control
/// u, from (0.1, 0.1, 0.1) at dt = 0.01. N must equal plan.total_steps().
HomotopyResult example45_pipeline(double u, Eigen::Index N = 1000,
                                  const StagePlan& plan = StagePlan{5, 200},
                                  const JointOptions& options = {});

}  // namespace orbsim
