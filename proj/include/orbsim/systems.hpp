#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace orbsim {

using ParamMap = std::map<std::string, double>;
using FieldFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// Piecewise-linear characteristic of Chua's diode:
/// m1*x + (m0 - m1)(|x + 1| - |x - 1|) / 2.
template <typename Scalar>
Scalar chua_nonlinearity(Scalar x, Scalar m0, Scalar m1) {
  using std::abs;
  return m1 * x + Scalar(0.5) * (m0 - m1) * (abs(x + Scalar(1)) - abs(x - Scalar(1)));
}

/// Derivative of chua_nonlinearity. At the kinks |x| = 1 the inner slope m0
/// is returned.
template <typename Scalar>
Scalar chua_slope(Scalar x, Scalar m0, Scalar m1) {
  using std::abs;
  return abs(x) <= Scalar(1) ? m0 : m1;
}

/// A continuous-time vector field with analytic Jacobian.
///
/// A plain system ignores the homotopy parameter and must be evaluated
/// without one. A hybrid built by make_hybrid(f, g) evaluates
/// (1 - lambda) f + lambda g and requires lambda on every call.
///
/// Instances are immutable; copies share the underlying evaluators.
class System {
 public:
  System(std::string name, int dim, ParamMap params, FieldFn field, JacobianFn jacobian);

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return dim_; }
  const ParamMap& params() const noexcept { return params_; }
  bool is_hybrid() const noexcept { return hybrid_ != nullptr; }

  Eigen::VectorXd field(const Eigen::VectorXd& state,
                        std::optional<double> lambda = std::nullopt) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& state,
                           std::optional<double> lambda = std::nullopt) const;

  /// d(field)/d(lambda) = g(state) - f(state). Hybrids only.
  Eigen::VectorXd lambda_partial(const Eigen::VectorXd& state) const;

  /// Constituents of a hybrid, in (lambda = 0, lambda = 1) order.
  const System& first() const;
  const System& second() const;

  friend System make_hybrid(const System& f, const System& g);

 private:
  struct Hybrid;

  void check_lambda(const std::optional<double>& lambda) const;

  std::string name_;
  int dim_;
  ParamMap params_;
  FieldFn field_;
  JacobianFn jacobian_;
  std::shared_ptr<const Hybrid> hybrid_;
};

/// Names accepted by make_system.
const std::vector<std::string>& catalog_names();

/// Default parameters of a catalog system.
ParamMap default_params(std::string_view name);

/// Builds one of lorenz, chua, rossler, chen, lu with its default
/// parameters, replacing any that appear in `overrides`.
///
/// Chua follows x' = alpha (y - x - f(x)); note the minus sign in front of
/// the diode term. Lu carries the additive control u on the second
/// equation, defaulting to 0.
System make_system(std::string_view name, const ParamMap& overrides = {});

/// Homotopy (1 - lambda) f + lambda g. lambda = 0 gives f, lambda = 1 gives g.
System make_hybrid(const System& f, const System& g);

/// A user-supplied field, mainly for test problems.
System make_custom(std::string name, int dim, FieldFn field, JacobianFn jacobian);

}  // namespace orbsim
