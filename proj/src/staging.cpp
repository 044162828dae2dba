#include "orbsim/staging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "orbsim/errors.hpp"

namespace orbsim {

void validate(const StagePlan& plan) {
  if (plan.stage_len < 1) throw ConfigError("stage_len must be positive");
  if (plan.num_stages < 1) throw ConfigError("num_stages must be positive");
}

namespace {

std::optional<CoupledEvaluation> try_evaluate(const CoupledProblem& problem,
                                              const Eigen::MatrixXd& A) {
  try {
    return evaluate_coupled(problem, A);
  } catch (const OverflowError&) {
    return std::nullopt;
  }
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index n) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n);
}

Eigen::MatrixXd clamp(const Eigen::MatrixXd& m, double bound) {
  return m.cwiseMax(-bound).cwiseMin(bound);
}

// Central-difference Newton matrix of vec(residual) over vec(A).
std::optional<Eigen::MatrixXd> residual_jacobian(const CoupledProblem& problem,
                                                 const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = n * n;
  Eigen::MatrixXd jac(m, m);
  for (Eigen::Index p = 0; p < m; ++p) {
    const double h = 1e-6 * std::max(1.0, std::abs(A.data()[p]));
    Eigen::MatrixXd plus = A, minus = A;
    plus.data()[p] += h;
    minus.data()[p] -= h;
    const auto rp = try_evaluate(problem, plus);
    const auto rm = try_evaluate(problem, minus);
    if (!rp || !rm) return std::nullopt;
    jac.col(p) = (flatten(rp->residual) - flatten(rm->residual)) / (2.0 * h);
  }
  if (!jac.allFinite()) return std::nullopt;
  return jac;
}

// Gauss-Newton matrix J_e^T J_e of the stacked misfits e_k = A x_k - y_k,
// with de_k/da_ij = e_i x_kj - S_k e_i x_0j. J_e^T e is vec(residual).
Eigen::MatrixXd gauss_newton_matrix(const CoupledProblem& problem, const CoupledEvaluation& ev) {
  const Eigen::Index n = problem.x0.size();
  Eigen::MatrixXd gn = Eigen::MatrixXd::Zero(n * n, n * n);
  Eigen::MatrixXd block(n, n * n);
  for (Eigen::Index k = 1; k <= problem.stage_len; ++k) {
    const Eigen::MatrixXd& S = ev.y_sensitivity[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        auto col = block.col(i + n * j);
        col = -problem.x0(j) * S.col(i);
        col(i) += ev.x.states(j, k);
      }
    }
    gn.noalias() += block.transpose() * block;
  }
  return gn;
}

}  // namespace

CoupledSolution solve_coupled(const CoupledProblem& problem, const SimilarityMatrix& A_init,
                              const SolverOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("solver tolerance must be positive");
  const Eigen::Index n = A_init.dim();

  Eigen::MatrixXd a = clamp(A_init.entries(), options.bound);
  CoupledEvaluation current = evaluate_coupled(problem, a);
  double norm = current.residual.norm();
  double damping = 1e-3;

  Eigen::MatrixXd best = a;
  SolveDiagnostics diag;
  diag.residual_norm = norm;
  diag.cost = current.cost;

  const auto accept = [&](Eigen::MatrixXd trial, CoupledEvaluation&& ev) {
    a = std::move(trial);
    current = std::move(ev);
    norm = current.residual.norm();
  };

  for (int it = 0; it < options.max_iter; ++it) {
    if (norm <= options.tol) break;
    diag.iterations = it + 1;
    bool accepted = false;

    // Full Newton step on the residual. Taken only when it at least halves
    // the residual without raising the cost beyond rounding level, so saddles
    // do not attract.
    if (const auto jac = residual_jacobian(problem, a)) {
      const Eigen::VectorXd step = jac->colPivHouseholderQr().solve(-flatten(current.residual));
      if (step.allFinite()) {
        Eigen::MatrixXd trial = clamp(a + unflatten(step, n), options.bound);
        auto ev = try_evaluate(problem, trial);
        if (ev && ev->residual.norm() <= 0.5 * norm &&
            ev->cost <= current.cost * (1.0 + 1e-6)) {
          accept(std::move(trial), std::move(*ev));
          accepted = true;
          ++diag.newton_steps;
        }
      }
    }

    // Levenberg-Marquardt step on the cost.
    if (!accepted) {
      const Eigen::MatrixXd gn = gauss_newton_matrix(problem, current);
      const Eigen::VectorXd g = flatten(current.residual);
      const Eigen::VectorXd scale = gn.diagonal().cwiseMax(1e-12 * (1.0 + gn.diagonal().maxCoeff()));
      for (int tries = 0; tries < 40 && !accepted; ++tries) {
        Eigen::MatrixXd lhs = gn;
        lhs.diagonal() += damping * scale;
        const Eigen::VectorXd step = lhs.ldlt().solve(-g);
        if (step.allFinite()) {
          Eigen::MatrixXd trial = clamp(a + unflatten(step, n), options.bound);
          auto ev = try_evaluate(problem, trial);
          if (ev && ev->cost < current.cost) {
            accept(std::move(trial), std::move(*ev));
            accepted = true;
            ++diag.lm_steps;
            damping = std::max(damping / 3.0, 1e-12);
            break;
          }
        }
        damping *= 4.0;
      }
      if (!accepted) damping = 1e-3;
    }

    // Steepest descent on the cost; its gradient is twice the residual.
    if (!accepted) {
      const Eigen::MatrixXd grad = 2.0 * current.residual;
      const double g2 = grad.squaredNorm();
      double t = 1.0 / std::max(1.0, std::sqrt(g2));
      for (int tries = 0; tries < 60 && !accepted; ++tries, t *= 0.5) {
        Eigen::MatrixXd trial = clamp(a - t * grad, options.bound);
        auto ev = try_evaluate(problem, trial);
        if (ev && ev->cost <= current.cost - 1e-4 * t * g2 && ev->cost < current.cost) {
          accept(std::move(trial), std::move(*ev));
          accepted = true;
          ++diag.gradient_steps;
        }
      }
    }

    if (!accepted) break;
    if (norm < diag.residual_norm) {
      best = a;
      diag.residual_norm = norm;
      diag.cost = current.cost;
    }
  }

  diag.converged = diag.residual_norm <= options.tol;
  return {SimilarityMatrix(best, options.bound), diag};
}

CoupledSolution solve_coupled(const Eigen::VectorXd& x0, const System& x_system,
                              const System& y_system, Eigen::Index stage_len, double dt,
                              const SimilarityMatrix& A_init, double tol, int max_iter) {
  CoupledProblem problem{&x_system, &y_system, x0, stage_len, dt, std::nullopt, std::nullopt};
  return solve_coupled(problem, A_init, SolverOptions{tol, max_iter, A_init.bound()});
}

SimilarityMatrix default_initial_matrix(const CoupledProblem& problem, double bound) {
  try {
    const Trajectory x = simulate(*problem.x_system, problem.x0, problem.stage_len, problem.dt,
                                  problem.x_lambda);
    const Trajectory y = simulate(*problem.y_system, problem.x0, problem.stage_len, problem.dt,
                                  problem.y_lambda);
    const SimilarityMatrix a = closed_form_align(x.states, y.states, 0.0, bound);
    // The fit must also keep the coupled orbit from A x0 bounded.
    simulate(*problem.y_system, a.entries() * problem.x0, problem.stage_len, problem.dt,
             problem.y_lambda);
    return a;
  } catch (const RankDeficiencyError&) {
    return SimilarityMatrix::identity(problem.x0.size(), bound);
  } catch (const OverflowError&) {
    return SimilarityMatrix::identity(problem.x0.size(), bound);
  }
}

std::vector<StageReport> pontryagin_align(const Trajectory& X, const Trajectory& Y,
                                          const StagePlan& plan, double tau, double bound) {
  validate(plan);
  if (X.dim() != Y.dim()) throw DimensionError("orbits differ in dimension");
  if (X.steps() < plan.total_steps() || Y.steps() < plan.total_steps())
    throw DimensionError("orbits are shorter than the stage plan");

  std::vector<StageReport> reports;
  reports.reserve(static_cast<std::size_t>(plan.num_stages));
  for (Eigen::Index s = 0; s < plan.num_stages; ++s) {
    const auto xw = X.states.middleCols(plan.start(s), plan.stage_len + 1);
    const auto yw = Y.states.middleCols(plan.start(s), plan.stage_len + 1);

    StageReport r;
    r.index = s;
    r.A = closed_form_align(xw, yw, tau, bound);
    r.omega = mean_sq_misfit(r.A.entries(), xw, yw);
    r.rho = similarity_degree(r.omega);
    const Eigen::MatrixXd grad = decoupled_gradient(r.A.entries(), xw, yw, tau);
    const double scale = 2.0 * ((yw * xw.transpose()).norm() +
                                (r.A.entries() * xw * xw.transpose()).norm() +
                                tau * r.A.entries().norm());
    r.residual_norm = scale > 0.0 ? grad.norm() / scale : grad.norm();
    r.iterations = 1;
    r.converged = r.residual_norm <= 1e-8;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<double> decoupled_cumulative(const std::vector<StageReport>& stages,
                                         const SimilarityMatrix& baseline, const Trajectory& X,
                                         const Trajectory& Y) {
  if (stages.empty()) throw DomainError("no stages");
  if (X.dim() != Y.dim() || X.steps() != Y.steps())
    throw DimensionError("orbits differ in dimension or length");
  const auto count = static_cast<Eigen::Index>(stages.size());
  if (X.steps() % count != 0)
    throw DimensionError("orbit length is not a multiple of the stage count");
  const Eigen::Index len = X.steps() / count;

  std::vector<double> adopted, base;
  for (Eigen::Index s = 0; s < count; ++s) {
    const auto xw = X.states.middleCols(s * len + 1, len);
    const auto yw = Y.states.middleCols(s * len + 1, len);
    adopted.push_back((stages[static_cast<std::size_t>(s)].A.entries() * xw - yw).squaredNorm());
    base.push_back((baseline.entries() * xw - yw).squaredNorm());
  }
  std::vector<double> curve;
  for (std::size_t m = 0; m <= adopted.size(); ++m) {
    double sum = 0.0;
    for (std::size_t s = 0; s < adopted.size(); ++s) sum += s < m ? adopted[s] : base[s];
    curve.push_back(similarity_degree(sum / static_cast<double>(X.steps())));
  }
  return curve;
}

namespace {

// sum_{k=1..L} ||A x_k - y_k||^2 for an observed x window.
double window_misfit_sum(const Eigen::MatrixXd& A, const Eigen::Ref<const Eigen::MatrixXd>& xw,
                         const System& y_system, double dt, std::optional<double> y_lambda) {
  const Eigen::Index len = xw.cols() - 1;
  const Trajectory y = simulate(y_system, A * xw.col(0), len, dt, y_lambda);
  return (A * xw.rightCols(len) - y.states.rightCols(len)).squaredNorm();
}

}  // namespace

double stage_misfit_sum(const Eigen::MatrixXd& A, const Eigen::VectorXd& boundary,
                        const System& x_system, const System& y_system,
                        Eigen::Index stage_len, double dt, std::optional<double> x_lambda,
                        std::optional<double> y_lambda) {
  const Trajectory x = simulate(x_system, boundary, stage_len, dt, x_lambda);
  return window_misfit_sum(A, x.states, y_system, dt, y_lambda);
}

double stage_rho(const CoupledProblem& problem, const Eigen::MatrixXd& A) {
  try {
    const double sum = stage_misfit_sum(A, problem.x0, *problem.x_system, *problem.y_system,
                                        problem.stage_len, problem.dt, problem.x_lambda,
                                        problem.y_lambda);
    return similarity_degree(sum / static_cast<double>(problem.stage_len));
  } catch (const OverflowError&) {
    // The matrix throws y off the attractor; it cannot win a comparison.
    return 0.0;
  }
}

namespace {

double curve_point(const std::vector<double>& adopted, const std::vector<double>& base,
                   std::size_t m, Eigen::Index total_steps) {
  double sum = 0.0;
  for (std::size_t s = 0; s < adopted.size(); ++s) sum += s < m ? adopted[s] : base[s];
  return similarity_degree(sum / static_cast<double>(total_steps));
}

struct StageSums {
  std::vector<double> adopted;
  std::vector<double> base;
};

StageSums stage_sums(const std::vector<StageReport>& stages, const SimilarityMatrix& baseline,
                     const Trajectory& X_full, const System& y_system) {
  if (stages.empty()) throw DomainError("no stages");
  const auto count = static_cast<Eigen::Index>(stages.size());
  if (X_full.steps() % count != 0)
    throw DimensionError("orbit length is not a multiple of the stage count");
  const Eigen::Index len = X_full.steps() / count;

  StageSums sums;
  for (Eigen::Index s = 0; s < count; ++s) {
    const auto xw = X_full.states.middleCols(s * len, len + 1);
    sums.adopted.push_back(window_misfit_sum(stages[static_cast<std::size_t>(s)].A.entries(), xw,
                                             y_system, X_full.dt, std::nullopt));
    sums.base.push_back(window_misfit_sum(baseline.entries(), xw, y_system, X_full.dt,
                                          std::nullopt));
  }
  return sums;
}

}  // namespace

CoupledSolution solve_stage(const CoupledProblem& problem, const SolverOptions& options) {
  const Eigen::Index n = problem.x0.size();
  // Long LM crawls from the closed-form start usually vanish from the
  // identity; the zero matrix is the last resort when y escapes from both.
  const SimilarityMatrix starts[] = {default_initial_matrix(problem, options.bound),
                                     SimilarityMatrix::identity(n, options.bound),
                                     SimilarityMatrix(Eigen::MatrixXd::Zero(n, n), options.bound)};
  std::optional<CoupledSolution> best;
  int iterations = 0;
  for (const SimilarityMatrix& start : starts) {
    try {
      CoupledSolution sol = solve_coupled(problem, start, options);
      iterations += sol.diagnostics.iterations;
      if (!best || sol.diagnostics.residual_norm < best->diagnostics.residual_norm)
        best = std::move(sol);
    } catch (const OverflowError&) {
      continue;
    }
    if (best->diagnostics.converged) break;
  }
  if (!best) throw OverflowError(0, "every starting matrix sends the coupled orbit past the guard");
  best->diagnostics.iterations = iterations;
  return *best;
}

double cumulative_similarity(const std::vector<StageReport>& stages,
                             const SimilarityMatrix& baseline, const Trajectory& X_full,
                             const System& y_system, Eigen::Index m) {
  if (m < 0 || m > static_cast<Eigen::Index>(stages.size()))
    throw DomainError("stage count m out of range");
  const StageSums sums = stage_sums(stages, baseline, X_full, y_system);
  return curve_point(sums.adopted, sums.base, static_cast<std::size_t>(m), X_full.steps());
}

BellmanResult bellman_dp(const System& x_system, const System& y_system,
                         const Eigen::VectorXd& x0, const StagePlan& plan, double dt,
                         const SolverOptions& options) {
  validate(plan);
  BellmanResult result;
  result.x = simulate(x_system, x0, plan.total_steps(), dt);

  CoupledProblem whole{&x_system, &y_system, x0, plan.total_steps(), dt, std::nullopt,
                       std::nullopt};
  const CoupledSolution base =
      solve_coupled(whole, default_initial_matrix(whole, options.bound), options);
  result.baseline = base.A;
  result.baseline_diagnostics = base.diagnostics;

  for (Eigen::Index s = 0; s < plan.num_stages; ++s) {
    CoupledProblem stage{&x_system, &y_system, result.x.state(plan.start(s)), plan.stage_len,
                         dt, std::nullopt, std::nullopt};
    const CoupledSolution sol = solve_stage(stage, options);

    StageReport r;
    r.index = s;
    r.residual_norm = sol.diagnostics.residual_norm;
    r.iterations = sol.diagnostics.iterations;
    r.converged = sol.diagnostics.converged;
    r.candidate_rho = stage_rho(stage, sol.A.entries());
    r.A = sol.A;
    r.rho = *r.candidate_rho;
    if (s > 0) {
      const StageReport& prev = result.stages.back();
      r.previous_rho = stage_rho(stage, prev.A.entries());
      if (*r.previous_rho > *r.candidate_rho) {
        r.A = prev.A;
        r.rho = *r.previous_rho;
        r.adopted_previous = true;
      }
    }
    const double sum = stage_misfit_sum(r.A.entries(), stage.x0, x_system, y_system,
                                        plan.stage_len, dt);
    r.omega = sum / static_cast<double>(plan.stage_len);
    result.stages.push_back(std::move(r));
  }

  const StageSums sums = stage_sums(result.stages, result.baseline, result.x, y_system);
  for (std::size_t m = 0; m <= result.stages.size(); ++m)
    result.cumulative.push_back(curve_point(sums.adopted, sums.base, m, result.x.steps()));
  return result;
}

}  // namespace orbsim
