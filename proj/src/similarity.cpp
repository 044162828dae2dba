#include "orbsim/similarity.hpp"

#include <limits>
#include <string>

namespace orbsim {

SimilarityMatrix::SimilarityMatrix(Eigen::MatrixXd entries, double bound)
    : entries_(std::move(entries)), bound_(bound) {
  if (!(bound_ > 0.0)) throw DomainError("matrix bound must be positive");
  if (entries_.rows() != entries_.cols()) throw DimensionError("similarity matrix must be square");
  if (!entries_.allFinite()) throw DomainError("similarity matrix has non-finite entries");
  if (entries_.size() > 0 && entries_.cwiseAbs().maxCoeff() > bound_)
    throw DomainError("similarity matrix entry outside |a_ij| <= " + std::to_string(bound_));
}

SimilarityMatrix SimilarityMatrix::projected(const Eigen::MatrixXd& entries, double bound) {
  if (!entries.allFinite()) throw DomainError("similarity matrix has non-finite entries");
  return SimilarityMatrix(entries.cwiseMax(-bound).cwiseMin(bound), bound);
}

double cost(const SimilarityMatrix& A, const Trajectory& X, const Trajectory& Y, double tau) {
  return cost(A.entries(), X.states, Y.states, tau);
}

double mean_sq_misfit(const SimilarityMatrix& A, const Trajectory& X, const Trajectory& Y) {
  return mean_sq_misfit(A.entries(), X.states, Y.states);
}

Eigen::MatrixXd decoupled_gradient(const SimilarityMatrix& A, const Trajectory& X,
                                   const Trajectory& Y, double tau) {
  return decoupled_gradient(A.entries(), X.states, Y.states, tau);
}

SimilarityMatrix closed_form_align(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Y, double tau,
                                   double bound) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw DimensionError("orbits differ in dimension or length");
  if (tau < 0.0) throw DomainError("regularization weight must be non-negative");

  const Eigen::Index n = X.rows();
  const Eigen::MatrixXd gram = X * X.transpose() + tau * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd cross = Y * X.transpose();

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const double scale = gram.diagonal().cwiseAbs().maxCoeff();
  const bool singular = ldlt.info() != Eigen::Success || !(scale > 0.0) ||
                        ldlt.vectorD().minCoeff() <=
                            scale * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  if (singular) {
    if (tau == 0.0)
      throw RankDeficiencyError(
          "Gram matrix of the source orbit is singular; use a positive regularization weight");
    throw RankDeficiencyError("regularized Gram matrix is not positive definite");
  }
  // gram is symmetric, so A^T = gram^{-1} cross^T.
  const Eigen::MatrixXd a = ldlt.solve(cross.transpose()).transpose();
  return SimilarityMatrix::projected(a, bound);
}

SimilarityMatrix closed_form_align(const Trajectory& X, const Trajectory& Y, double tau,
                                   double bound) {
  return closed_form_align(X.states, Y.states, tau, bound);
}

CoupledEvaluation evaluate_coupled(const CoupledProblem& problem, const Eigen::MatrixXd& A) {
  if (!problem.x_system || !problem.y_system) throw ConfigError("coupled problem without systems");
  if (problem.stage_len < 1) throw DomainError("stage length must be at least 1");
  const Eigen::Index n = problem.x0.size();
  if (A.rows() != n || A.cols() != n)
    throw DimensionError("matrix does not match the state dimension");

  CoupledEvaluation ev;
  ev.x = simulate(*problem.x_system, problem.x0, problem.stage_len, problem.dt, problem.x_lambda);
  ev.y = simulate(*problem.y_system, A * problem.x0, problem.stage_len, problem.dt,
                  problem.y_lambda);
  ev.y_sensitivity = propagate_sensitivity(*problem.y_system, ev.y,
                                           Eigen::MatrixXd::Identity(n, n),
                                           SensitivityMode::StateSeeded);

  ev.residual = Eigen::MatrixXd::Zero(n, n);
  ev.cost = 0.0;
  for (Eigen::Index k = 0; k <= problem.stage_len; ++k) {
    const Eigen::VectorXd r = A * ev.x.state(k) - ev.y.state(k);
    ev.cost += r.squaredNorm();
    ev.residual += r * ev.x.state(k).transpose();
    ev.residual -= (ev.y_sensitivity[static_cast<std::size_t>(k)].transpose() * r) *
                   problem.x0.transpose();
  }
  return ev;
}

double coupled_cost(const CoupledProblem& problem, const Eigen::MatrixXd& A) {
  const Trajectory x =
      simulate(*problem.x_system, problem.x0, problem.stage_len, problem.dt, problem.x_lambda);
  const Trajectory y = simulate(*problem.y_system, A * problem.x0, problem.stage_len, problem.dt,
                                problem.y_lambda);
  return cost(A, x.states, y.states, 0.0);
}

Eigen::MatrixXd coupled_residual(const SimilarityMatrix& A, const Eigen::VectorXd& x0,
                                 const System& x_system, const System& y_system,
                                 Eigen::Index stage_len, double dt) {
  CoupledProblem problem{&x_system, &y_system, x0, stage_len, dt, std::nullopt, std::nullopt};
  return evaluate_coupled(problem, A.entries()).residual;
}

}  // namespace orbsim
