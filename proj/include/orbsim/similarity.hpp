#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "orbsim/errors.hpp"
#include "orbsim/integrator.hpp"
#include "orbsim/systems.hpp"

namespace orbsim {

/// Default box bound on every entry of a similarity matrix.
inline constexpr double kDefaultBound = 1e4;

/// Square matrix A mapping one orbit onto another, y_k ~ A x_k, with entries
/// confined to the box |a_ij| <= bound.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;

  /// Throws DomainError if an entry is non-finite or outside the box.
  explicit SimilarityMatrix(Eigen::MatrixXd entries, double bound = kDefaultBound);

  /// Clamps `entries` onto the box instead of rejecting them.
  static SimilarityMatrix projected(const Eigen::MatrixXd& entries, double bound = kDefaultBound);

  static SimilarityMatrix identity(Eigen::Index n, double bound = kDefaultBound) {
    return SimilarityMatrix(Eigen::MatrixXd::Identity(n, n), bound);
  }

  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  double bound() const noexcept { return bound_; }
  Eigen::Index dim() const noexcept { return entries_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

 private:
  Eigen::MatrixXd entries_;
  double bound_ = kDefaultBound;
};

namespace detail {

template <typename DA, typename DX, typename DY>
void check_alignment_shapes(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
                            const Eigen::MatrixBase<DY>& Y) {
  if (A.rows() != A.cols()) throw DimensionError("similarity matrix must be square");
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw DimensionError("orbits differ in dimension or length");
  if (A.cols() != X.rows()) throw DimensionError("matrix does not match the state dimension");
}

}  // namespace detail

/// sum_k ||A x_k - y_k||^2 + tau ||A||^2 over all columns, with ||A||^2 the
/// sum of squared entries.
template <typename DA, typename DX, typename DY>
double cost(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
            const Eigen::MatrixBase<DY>& Y, double tau) {
  detail::check_alignment_shapes(A, X, Y);
  return (A * X - Y).squaredNorm() + tau * A.squaredNorm();
}

/// (1/N) sum_{k=1..N} ||A x_k - y_k||^2. Column 0 is left out.
template <typename DA, typename DX, typename DY>
double mean_sq_misfit(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DX>& X,
                      const Eigen::MatrixBase<DY>& Y) {
  detail::check_alignment_shapes(A, X, Y);
  const Eigen::Index n = X.cols() - 1;
  if (n < 1) throw DimensionError("misfit needs at least one step");
  return (A * X.rightCols(n) - Y.rightCols(n)).squaredNorm() / static_cast<double>(n);
}

/// 2 sum_k (A x_k - y_k) x_k^T + 2 tau A.
template <typename DA, typename DX, typename DY>
Eigen::MatrixXd decoupled_gradient(const Eigen::MatrixBase<DA>& A,
                                   const Eigen::MatrixBase<DX>& X,
                                   const Eigen::MatrixBase<DY>& Y, double tau) {
  detail::check_alignment_shapes(A, X, Y);
  return 2.0 * (A * X - Y) * X.transpose() + 2.0 * tau * A;
}

/// rho = ln(1 + omega) / omega, 1 at omega = 0 and 0 at omega = +inf.
template <typename Scalar>
Scalar similarity_degree(Scalar omega) {
  using std::isinf;
  using std::log1p;
  if (!(omega >= Scalar(0))) throw DomainError("misfit must be non-negative");
  if (omega == Scalar(0)) return Scalar(1);
  if (isinf(omega)) return Scalar(0);
  return log1p(omega) / omega;
}

double cost(const SimilarityMatrix& A, const Trajectory& X, const Trajectory& Y, double tau);
double mean_sq_misfit(const SimilarityMatrix& A, const Trajectory& X, const Trajectory& Y);
Eigen::MatrixXd decoupled_gradient(const SimilarityMatrix& A, const Trajectory& X,
                                   const Trajectory& Y, double tau);

/// Minimizer of the regularized cost with both orbits fixed:
/// A = (sum y_k x_k^T)(sum x_k x_k^T + tau I)^{-1}, clamped onto the box.
/// Throws RankDeficiencyError when tau = 0 and the Gram matrix is singular.
SimilarityMatrix closed_form_align(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Y, double tau,
                                   double bound = kDefaultBound);
SimilarityMatrix closed_form_align(const Trajectory& X, const Trajectory& Y, double tau,
                                   double bound = kDefaultBound);

/// Coupled problem: X runs from x0 under x_system, Y from A x0 under
/// y_system, both for `stage_len` steps. Lambdas are passed to hybrid
/// systems only.
struct CoupledProblem {
  const System* x_system = nullptr;
  const System* y_system = nullptr;
  Eigen::VectorXd x0;
  Eigen::Index stage_len = 1;
  double dt = 0.01;
  std::optional<double> x_lambda;
  std::optional<double> y_lambda;
};

/// Everything computed for one matrix of a coupled problem.
struct CoupledEvaluation {
  Trajectory x;
  Trajectory y;
  /// S_k = dy_k / dy_0 for k = 0..stage_len.
  std::vector<Eigen::MatrixXd> y_sensitivity;
  /// First-order optimality residual, one half of dJ/dA.
  Eigen::MatrixXd residual;
  /// sum_{k=0..N} ||A x_k - y_k||^2.
  double cost = 0.0;
};

CoupledEvaluation evaluate_coupled(const CoupledProblem& problem, const Eigen::MatrixXd& A);

/// Cost of the coupled problem, with Y regenerated from A x0.
double coupled_cost(const CoupledProblem& problem, const Eigen::MatrixXd& A);

/// Optimality residual of the coupled problem at A:
///   R_ij = sum_k [ (A x_k - y_k)_i x_kj - x_0j (S_k^T (A x_k - y_k))_i ]
/// where S_k is the product of step Jacobians from y_0 to y_k.
Eigen::MatrixXd coupled_residual(const SimilarityMatrix& A, const Eigen::VectorXd& x0,
                                 const System& x_system, const System& y_system,
                                 Eigen::Index stage_len, double dt);

}  // namespace orbsim
