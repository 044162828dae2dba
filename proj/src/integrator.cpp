#include "orbsim/integrator.hpp"

#include "orbsim/errors.hpp"

namespace orbsim {

namespace {

void check_dt(double dt) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
}

void check_dim(const System& system, Eigen::Index size) {
  if (size != system.dim())
    throw DimensionError("state of size " + std::to_string(size) + " for system '" +
                         system.name() + "' of dimension " + std::to_string(system.dim()));
}

void check_finite(const Eigen::VectorXd& v, std::size_t step) {
  if (!v.allFinite()) throw OverflowError(step, "non-finite state");
  if (v.cwiseAbs().maxCoeff() > kOverflowLimit)
    throw OverflowError(step, "state magnitude above " + std::to_string(kOverflowLimit));
}

}  // namespace

Eigen::VectorXd rk4_step(const System& system, const Eigen::VectorXd& state, double dt,
                         std::optional<double> lambda, std::size_t step_index) {
  check_dt(dt);
  check_dim(system, state.size());
  const Eigen::VectorXd k1 = system.field(state, lambda);
  const Eigen::VectorXd k2 = system.field(state + 0.5 * dt * k1, lambda);
  const Eigen::VectorXd k3 = system.field(state + 0.5 * dt * k2, lambda);
  const Eigen::VectorXd k4 = system.field(state + dt * k3, lambda);
  Eigen::VectorXd next = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  check_finite(next, step_index);
  return next;
}

Trajectory simulate(const System& system, const Eigen::VectorXd& x0, Eigen::Index steps,
                    double dt, std::optional<double> lambda) {
  check_dt(dt);
  check_dim(system, x0.size());
  if (steps < 0) throw DomainError("number of steps must be non-negative");

  Trajectory t;
  t.dt = dt;
  t.system_name = system.name();
  t.lambda = lambda;
  t.states.resize(x0.size(), steps + 1);
  t.states.col(0) = x0;
  check_finite(x0, 0);
  for (Eigen::Index k = 0; k < steps; ++k) {
    t.states.col(k + 1) =
        rk4_step(system, t.states.col(k), dt, lambda, static_cast<std::size_t>(k + 1));
  }
  return t;
}

StepTangent step_tangent(const System& system, const Eigen::VectorXd& state, double dt,
                         std::optional<double> lambda) {
  check_dt(dt);
  check_dim(system, state.size());
  const auto n = state.size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

  const Eigen::VectorXd s1 = state;
  const Eigen::VectorXd k1 = system.field(s1, lambda);
  const Eigen::VectorXd s2 = state + 0.5 * dt * k1;
  const Eigen::VectorXd k2 = system.field(s2, lambda);
  const Eigen::VectorXd s3 = state + 0.5 * dt * k2;
  const Eigen::VectorXd k3 = system.field(s3, lambda);
  const Eigen::VectorXd s4 = state + dt * k3;

  const Eigen::MatrixXd J1 = system.jacobian(s1, lambda);
  const Eigen::MatrixXd J2 = system.jacobian(s2, lambda);
  const Eigen::MatrixXd J3 = system.jacobian(s3, lambda);
  const Eigen::MatrixXd J4 = system.jacobian(s4, lambda);

  // dk_i/dstate
  const Eigen::MatrixXd D1 = J1;
  const Eigen::MatrixXd D2 = J2 * (I + 0.5 * dt * D1);
  const Eigen::MatrixXd D3 = J3 * (I + 0.5 * dt * D2);
  const Eigen::MatrixXd D4 = J4 * (I + dt * D3);

  StepTangent out;
  out.jac = I + (dt / 6.0) * (D1 + 2.0 * D2 + 2.0 * D3 + D4);
  if (!out.jac.allFinite()) throw OverflowError(0, "non-finite step tangent");

  if (system.is_hybrid()) {
    // dk_i/dlambda, with the explicit partial g - f at each stage point.
    const Eigen::VectorXd L1 = system.lambda_partial(s1);
    const Eigen::VectorXd L2 = system.lambda_partial(s2) + J2 * (0.5 * dt * L1);
    const Eigen::VectorXd L3 = system.lambda_partial(s3) + J3 * (0.5 * dt * L2);
    const Eigen::VectorXd L4 = system.lambda_partial(s4) + J4 * (dt * L3);
    out.lam = (dt / 6.0) * (L1 + 2.0 * L2 + 2.0 * L3 + L4);
  }
  return out;
}

std::vector<Eigen::MatrixXd> propagate_sensitivity(const System& system,
                                                   const Trajectory& trajectory,
                                                   const Eigen::MatrixXd& seed,
                                                   SensitivityMode mode) {
  check_dim(system, trajectory.dim());
  if (seed.rows() != trajectory.dim())
    throw DimensionError("sensitivity seed must have one row per state component");
  if (mode == SensitivityMode::LambdaForced) {
    if (!system.is_hybrid()) throw ConfigError("lambda-forced sensitivity needs a hybrid system");
    if (seed.cols() != 1) throw DimensionError("lambda-forced seed must be a single column");
  }

  const Eigen::Index steps = trajectory.steps();
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(steps + 1));
  out.push_back(seed);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const StepTangent t =
        step_tangent(system, trajectory.state(k), trajectory.dt, trajectory.lambda);
    Eigen::MatrixXd next = t.jac * out.back();
    if (mode == SensitivityMode::LambdaForced) next.col(0) += *t.lam;
    if (!next.allFinite())
      throw OverflowError(static_cast<std::size_t>(k + 1), "non-finite sensitivity");
    out.push_back(std::move(next));
  }
  return out;
}

bool is_consistent(const System& system, const Trajectory& trajectory) {
  for (Eigen::Index k = 0; k < trajectory.steps(); ++k) {
    const Eigen::VectorXd next =
        rk4_step(system, trajectory.state(k), trajectory.dt, trajectory.lambda);
    if (next != trajectory.states.col(k + 1)) return false;
  }
  return true;
}

}  // namespace orbsim
