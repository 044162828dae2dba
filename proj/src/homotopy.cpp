#include "orbsim/homotopy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "orbsim/errors.hpp"
#include "orbsim/integrator.hpp"

namespace orbsim {

namespace {

std::optional<double> lambda_for(const System& system, double lambda) {
  if (system.is_hybrid()) return lambda;
  return std::nullopt;
}

void check_unit(const LambdaPair& lambda) {
  for (double l : lambda)
    if (!(l >= 0.0 && l <= 1.0))
      throw DomainError("embedding parameter " + std::to_string(l) + " outside [0, 1]");
}

CoupledProblem joint_problem(const Eigen::VectorXd& x0, const System& H1, const System& H2,
                             Eigen::Index stage_len, double dt, const LambdaPair& lambda) {
  return {&H1, &H2, x0, stage_len, dt, lambda_for(H1, lambda[0]), lambda_for(H2, lambda[1])};
}

}  // namespace

KktResidual kkt_residual(const HomotopyAlignment& candidate, const Eigen::VectorXd& x0,
                         const System& H1, const System& H2, Eigen::Index stage_len, double dt) {
  check_unit(candidate.lambda);
  const CoupledProblem problem = joint_problem(x0, H1, H2, stage_len, dt, candidate.lambda);
  const Eigen::MatrixXd& A = candidate.A.entries();
  CoupledEvaluation ev = evaluate_coupled(problem, A);

  KktResidual out;
  out.A = std::move(ev.residual);
  out.lambda.setZero();
  const Eigen::Index n = x0.size();
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, 1);

  if (H1.is_hybrid()) {
    const auto sx = propagate_sensitivity(H1, ev.x, zero, SensitivityMode::LambdaForced);
    for (Eigen::Index k = 0; k <= stage_len; ++k) {
      const Eigen::VectorXd r = A * ev.x.state(k) - ev.y.state(k);
      out.lambda(0) += (A.transpose() * r).dot(sx[static_cast<std::size_t>(k)].col(0));
    }
  }
  if (H2.is_hybrid()) {
    // y_0 = A x_0 carries no lambda dependence, so the seed is zero.
    const auto sy = propagate_sensitivity(H2, ev.y, zero, SensitivityMode::LambdaForced);
    for (Eigen::Index k = 0; k <= stage_len; ++k) {
      const Eigen::VectorXd r = A * ev.x.state(k) - ev.y.state(k);
      out.lambda(1) -= r.dot(sy[static_cast<std::size_t>(k)].col(0));
    }
  }
  return out;
}

double joint_cost(const HomotopyAlignment& candidate, const Eigen::VectorXd& x0,
                  const System& H1, const System& H2, Eigen::Index stage_len, double dt) {
  check_unit(candidate.lambda);
  return coupled_cost(joint_problem(x0, H1, H2, stage_len, dt, candidate.lambda),
                      candidate.A.entries());
}

JointSolution solve_joint(const Eigen::VectorXd& x0, const System& H1, const System& H2,
                          Eigen::Index stage_len, double dt, const SimilarityMatrix& A_init,
                          LambdaPair lambda_init, const JointOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("solver tolerance must be positive");
  check_unit(lambda_init);
  check_unit(options.lambda_lo);
  check_unit(options.lambda_hi);

  LambdaPair lo = options.lambda_lo, hi = options.lambda_hi;
  for (int i = 0; i < 2; ++i)
    if (lo[i] > hi[i]) throw ConfigError("lambda lower bound above upper bound");

  // Free coordinates: with tie_lambda a single parameter drives both.
  std::array<bool, 2> pinned{!H1.is_hybrid() || lo[0] == hi[0],
                             !H2.is_hybrid() || lo[1] == hi[1]};
  LambdaPair lambda = lambda_init;
  if (options.tie_lambda) {
    lo[0] = lo[1] = std::max(lo[0], lo[1]);
    hi[0] = hi[1] = std::min(hi[0], hi[1]);
    if (lo[0] > hi[0]) throw ConfigError("tied lambda bounds do not intersect");
    lambda[1] = lambda[0];
    const bool frozen = lo[0] == hi[0] || (!H1.is_hybrid() && !H2.is_hybrid());
    pinned = {frozen, frozen};
  }
  for (int i = 0; i < 2; ++i) lambda[i] = std::clamp(lambda[i], lo[i], hi[i]);

  // Gradient in the free coordinates, projected for the box.
  const auto projected = [&](const Eigen::Vector2d& g, const LambdaPair& at) {
    Eigen::Vector2d d = g;
    if (options.tie_lambda) d.setConstant(g.sum());
    for (int i = 0; i < 2; ++i) {
      if (pinned[static_cast<std::size_t>(i)]) d(i) = 0.0;
      else if (at[i] <= lo[i]) d(i) = std::min(d(i), 0.0);
      else if (at[i] >= hi[i]) d(i) = std::max(d(i), 0.0);
    }
    return d;
  };

  JointSolution out;
  HomotopyAlignment& cur = out.alignment;
  cur.A = A_init;
  cur.lambda = lambda;
  JointDiagnostics& diag = out.diagnostics;
  const SolverOptions inner{options.tol, options.inner_max_iter, options.bound};

  const auto solve_at = [&](const LambdaPair& l, const SimilarityMatrix& from) {
    return solve_coupled(joint_problem(x0, H1, H2, stage_len, dt, l), from, inner);
  };

  CoupledSolution sol = solve_at(cur.lambda, A_init);
  cur.A = sol.A;
  diag.inner_iterations = sol.diagnostics.iterations;
  diag.cost = sol.diagnostics.cost;

  Eigen::Vector2d prev_lambda = Eigen::Vector2d::Zero(), prev_dir = Eigen::Vector2d::Zero();
  double last_step = 0.1;
  for (int it = 0; it < options.max_iter; ++it) {
    diag.iterations = it + 1;
    const KktResidual kkt = kkt_residual(cur, x0, H1, H2, stage_len, dt);
    const Eigen::Vector2d g = projected(kkt.lambda, cur.lambda);
    cur.kkt_A_norm = kkt.A.norm();
    cur.kkt_lambda_norm = options.tie_lambda ? std::abs(g(0)) : g.norm();
    if (cur.kkt_A_norm <= options.tol && cur.kkt_lambda_norm <= options.tol) {
      diag.converged = true;
      break;
    }
    if (g.isZero(0.0)) break;

    const Eigen::Vector2d dir = options.tie_lambda ? Eigen::Vector2d::Constant(g(0)) : g;
    const Eigen::Vector2d here(cur.lambda[0], cur.lambda[1]);
    // First step 0.1; afterwards a Barzilai-Borwein estimate of the inverse
    // curvature of the cost with A re-solved, or twice the last accepted
    // step where the cost curves downward.
    double t = 0.1;
    if (it > 0) {
      const Eigen::Vector2d ds = here - prev_lambda, dg = dir - prev_dir;
      const double sy = ds.dot(dg);
      t = sy > 0.0 ? ds.squaredNorm() / sy : 2.0 * last_step;
      t = std::clamp(t, 1e-12, 1e12);
    }
    prev_lambda = here;
    prev_dir = dir;

    bool moved = false;
    for (int tries = 0; tries < 30 && !moved; ++tries, t *= 0.5) {
      LambdaPair trial;
      for (int i = 0; i < 2; ++i) trial[i] = std::clamp(cur.lambda[i] - t * dir(i), lo[i], hi[i]);
      if (options.tie_lambda) trial[1] = trial[0];
      const Eigen::Vector2d d = Eigen::Vector2d(trial[0], trial[1]) - here;
      if (d.isZero(0.0)) break;
      std::optional<CoupledSolution> next;
      try {
        next = solve_at(trial, cur.A);
      } catch (const OverflowError&) {
        continue;
      }
      diag.inner_iterations += next->diagnostics.iterations;
      // The cost gradient is twice the residual.
      const double slope = options.tie_lambda ? 2.0 * g(0) * d(0) : 2.0 * g.dot(d);
      const double c = next->diagnostics.cost;
      if (c < diag.cost && c <= diag.cost + 1e-4 * slope) {
        cur.lambda = trial;
        cur.A = next->A;
        diag.cost = c;
        moved = true;
        last_step = t;
        ++diag.lambda_steps;
      }
    }
    if (!moved) break;
  }
  return out;
}

namespace {

// Infinite when the orbits escape, which maps to rho = 0.
double stage_sum(const HomotopyAlignment& a, const Eigen::VectorXd& boundary, const System& H1,
                 const System& H2, Eigen::Index len, double dt) {
  try {
    return stage_misfit_sum(a.A.entries(), boundary, H1, H2, len, dt,
                            lambda_for(H1, a.lambda[0]), lambda_for(H2, a.lambda[1]));
  } catch (const OverflowError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

HomotopyResult homotopy_dp(const System& H1, const System& H2, const Eigen::VectorXd& x0,
                           const StagePlan& plan, double dt, const JointOptions& options,
                           LambdaPair lambda_init) {
  validate(plan);
  if (H1.dim() != H2.dim() || x0.size() != H1.dim())
    throw DimensionError("systems and initial state differ in dimension");
  check_unit(lambda_init);

  const Eigen::Index n = x0.size();
  const Eigen::Index L = plan.stage_len;
  const Eigen::Index total = plan.total_steps();
  const SolverOptions inner{options.tol, options.inner_max_iter, options.bound};

  HomotopyResult result;
  {
    const CoupledProblem whole = joint_problem(x0, H1, H2, total, dt, lambda_init);
    // Lambda stays at its initial value over the whole horizon: a chaotic
    // horizon gives no usable lambda gradient and each trial costs a full solve.
    JointOptions frozen = options;
    frozen.lambda_lo = frozen.lambda_hi = lambda_init;
    const JointSolution base = solve_joint(x0, H1, H2, total, dt,
                                           default_initial_matrix(whole, options.bound),
                                           lambda_init, frozen);
    result.baseline = base.alignment;
    result.baseline_diagnostics = base.diagnostics;
  }

  result.x.resize(n, total + 1);
  result.actual.resize(n, total + 1);
  result.simulated.resize(n, total + 1);

  // Stage boundaries come from one reference orbit at lambda_init, so a
  // stage with small lambda1 cannot carry x off the attractor for the next.
  result.reference = simulate(H1, x0, total, dt, lambda_for(H1, lambda_init[0]));

  std::vector<double> adopted_sums, base_sums;
  LambdaPair warm = lambda_init;
  for (Eigen::Index s = 0; s < plan.num_stages; ++s) {
    const Eigen::VectorXd boundary = result.reference.state(plan.start(s));
    const CoupledProblem stage = joint_problem(boundary, H1, H2, L, dt, warm);
    const CoupledSolution start = solve_stage(stage, inner);
    const JointSolution sol = solve_joint(boundary, H1, H2, L, dt, start.A, warm, options);
    const HomotopyAlignment& cand = sol.alignment;

    StageReport r;
    r.index = s;
    r.residual_norm = cand.kkt_A_norm;
    r.kkt_lambda_norm = cand.kkt_lambda_norm;
    r.iterations = sol.diagnostics.iterations;
    r.converged = sol.diagnostics.converged;
    r.candidate_rho = stage_rho(joint_problem(boundary, H1, H2, L, dt, cand.lambda),
                                cand.A.entries());
    HomotopyAlignment chosen = cand;
    r.rho = *r.candidate_rho;
    if (s > 0) {
      const StageReport& prev = result.stages.back();
      const LambdaPair prev_lambda = *prev.lambda;
      r.previous_rho = stage_rho(joint_problem(boundary, H1, H2, L, dt, prev_lambda),
                                 prev.A.entries());
      if (*r.previous_rho > *r.candidate_rho) {
        chosen.A = prev.A;
        chosen.lambda = prev_lambda;
        r.rho = *r.previous_rho;
        r.adopted_previous = true;
      }
    }
    r.A = chosen.A;
    r.lambda = chosen.lambda;

    const Trajectory xs = simulate(H1, boundary, L, dt, lambda_for(H1, chosen.lambda[0]));
    const Trajectory ys = simulate(H2, chosen.A.entries() * boundary, L, dt,
                                   lambda_for(H2, chosen.lambda[1]));
    const Eigen::MatrixXd ax = chosen.A.entries() * xs.states;
    result.x.middleCols(plan.start(s), L + 1) = xs.states;
    result.actual.middleCols(plan.start(s), L + 1) = ys.states;
    result.simulated.middleCols(plan.start(s), L + 1) = ax;

    const double sum = (ax.rightCols(L) - ys.states.rightCols(L)).squaredNorm();
    r.omega = sum / static_cast<double>(L);
    adopted_sums.push_back(sum);
    base_sums.push_back(stage_sum(result.baseline, boundary, H1, H2, L, dt));

    warm = chosen.lambda;
    result.stages.push_back(std::move(r));
  }

  for (std::size_t m = 0; m <= adopted_sums.size(); ++m) {
    double sum = 0.0;
    for (std::size_t s = 0; s < adopted_sums.size(); ++s)
      sum += s < m ? adopted_sums[s] : base_sums[s];
    result.cumulative.push_back(similarity_degree(sum / static_cast<double>(total)));
  }
  return result;
}

HomotopyResult example45_pipeline(double u, Eigen::Index N, const StagePlan& plan,
                                  const JointOptions& options) {
  validate(plan);
  if (N != plan.total_steps())
    throw ConfigError("N = " + std::to_string(N) + " does not match the stage plan (" +
                      std::to_string(plan.total_steps()) + " steps)");
  const System H1 = make_hybrid(make_system("chua"), make_system("lorenz"));
  const System H2 = make_system("lu", {{"u", u}});
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(3, 0.1);
  return homotopy_dp(H1, H2, x0, plan, 0.01, options);
}

}  // namespace orbsim
