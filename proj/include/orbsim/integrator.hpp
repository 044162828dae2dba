#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "orbsim/systems.hpp"

namespace orbsim {

/// Components beyond this magnitude abort a simulation.
inline constexpr double kOverflowLimit = 1e6;

/// A discrete orbit. Column k of `states` is the state after k steps.
struct Trajectory {
  Eigen::MatrixXd states;
  double dt = 0.01;
  std::string system_name;
  std::optional<double> lambda;

  Eigen::Index dim() const { return states.rows(); }
  /// Number of steps N; the orbit holds N + 1 states.
  Eigen::Index steps() const { return states.cols() - 1; }
  auto state(Eigen::Index k) const { return states.col(k); }
};

/// Derivatives of one RK4 step with respect to the state and, for hybrids,
/// with respect to lambda.
struct StepTangent {
  Eigen::MatrixXd jac;
  std::optional<Eigen::VectorXd> lam;
};

/// One classical fourth-order Runge-Kutta step. `step_index` only labels a
/// possible OverflowError.
Eigen::VectorXd rk4_step(const System& system, const Eigen::VectorXd& state, double dt,
                         std::optional<double> lambda = std::nullopt,
                         std::size_t step_index = 0);

/// Iterates rk4_step `steps` times from x0.
Trajectory simulate(const System& system, const Eigen::VectorXd& x0, Eigen::Index steps,
                    double dt, std::optional<double> lambda = std::nullopt);

/// Exact derivative of rk4_step, chained through the four stages.
StepTangent step_tangent(const System& system, const Eigen::VectorXd& state, double dt,
                         std::optional<double> lambda = std::nullopt);

enum class SensitivityMode {
  /// S_0 = seed, S_{k+1} = J_k S_k.
  StateSeeded,
  /// s_0 = seed (normally zero, dim x 1), s_{k+1} = J_k s_k + dPhi/dlambda.
  LambdaForced,
};

/// Forward tangent propagation along `trajectory`. Returns one matrix per
/// state, so the result has trajectory.steps() + 1 entries.
std::vector<Eigen::MatrixXd> propagate_sensitivity(const System& system,
                                                   const Trajectory& trajectory,
                                                   const Eigen::MatrixXd& seed,
                                                   SensitivityMode mode);

/// True when every stored state is exactly the RK4 image of its predecessor.
bool is_consistent(const System& system, const Trajectory& trajectory);

}  // namespace orbsim
