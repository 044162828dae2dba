#include "orbsim/systems.hpp"

#include <algorithm>
#include <utility>

#include "orbsim/errors.hpp"

namespace orbsim {

struct System::Hybrid {
  System first;
  System second;
};

System::System(std::string name, int dim, ParamMap params, FieldFn field, JacobianFn jacobian)
    : name_(std::move(name)),
      dim_(dim),
      params_(std::move(params)),
      field_(std::move(field)),
      jacobian_(std::move(jacobian)) {
  if (dim_ <= 0) throw ConfigError("system '" + name_ + "' must have positive dimension");
}

void System::check_lambda(const std::optional<double>& lambda) const {
  if (is_hybrid() && !lambda)
    throw ConfigError("hybrid system '" + name_ + "' evaluated without lambda");
  if (!is_hybrid() && lambda)
    throw ConfigError("lambda given for non-hybrid system '" + name_ + "'");
}

Eigen::VectorXd System::field(const Eigen::VectorXd& state, std::optional<double> lambda) const {
  check_lambda(lambda);
  if (!hybrid_) return field_(state);
  const double l = *lambda;
  return (1.0 - l) * hybrid_->first.field_(state) + l * hybrid_->second.field_(state);
}

Eigen::MatrixXd System::jacobian(const Eigen::VectorXd& state,
                                 std::optional<double> lambda) const {
  check_lambda(lambda);
  if (!hybrid_) return jacobian_(state);
  const double l = *lambda;
  return (1.0 - l) * hybrid_->first.jacobian_(state) + l * hybrid_->second.jacobian_(state);
}

Eigen::VectorXd System::lambda_partial(const Eigen::VectorXd& state) const {
  if (!hybrid_) throw ConfigError("lambda_partial on non-hybrid system '" + name_ + "'");
  return hybrid_->second.field_(state) - hybrid_->first.field_(state);
}

const System& System::first() const {
  if (!hybrid_) throw ConfigError("system '" + name_ + "' is not a hybrid");
  return hybrid_->first;
}

const System& System::second() const {
  if (!hybrid_) throw ConfigError("system '" + name_ + "' is not a hybrid");
  return hybrid_->second;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd vec3(double a, double b, double c) {
  VectorXd v(3);
  v << a, b, c;
  return v;
}

void check_state(const VectorXd& s, const std::string& name) {
  if (s.size() != 3)
    throw DimensionError(name + " expects a 3-vector, got size " + std::to_string(s.size()));
}

System lorenz(const ParamMap& p) {
  const double sigma = p.at("sigma"), r = p.at("r"), b = p.at("b");
  auto field = [=](const VectorXd& s) {
    check_state(s, "lorenz");
    const double x = s[0], y = s[1], z = s[2];
    return vec3(-sigma * x + sigma * y, -x * z + r * x - y, x * y - b * z);
  };
  auto jac = [=](const VectorXd& s) {
    check_state(s, "lorenz");
    const double x = s[0], y = s[1], z = s[2];
    MatrixXd j(3, 3);
    j << -sigma, sigma, 0.0,
         r - z, -1.0, -x,
         y, x, -b;
    return j;
  };
  return System("lorenz", 3, p, field, jac);
}

System chua(const ParamMap& p) {
  const double alpha = p.at("alpha"), beta = p.at("beta"), m0 = p.at("m0"), m1 = p.at("m1");
  auto field = [=](const VectorXd& s) {
    check_state(s, "chua");
    const double x = s[0], y = s[1], z = s[2];
    return vec3(alpha * (y - x - chua_nonlinearity(x, m0, m1)), x - y + z, -beta * y);
  };
  auto jac = [=](const VectorXd& s) {
    check_state(s, "chua");
    MatrixXd j(3, 3);
    j << -alpha * (1.0 + chua_slope(s[0], m0, m1)), alpha, 0.0,
         1.0, -1.0, 1.0,
         0.0, -beta, 0.0;
    return j;
  };
  return System("chua", 3, p, field, jac);
}

System rossler(const ParamMap& p) {
  const double a = p.at("a"), b = p.at("b"), c = p.at("c");
  auto field = [=](const VectorXd& s) {
    check_state(s, "rossler");
    const double x = s[0], y = s[1], z = s[2];
    return vec3(-y - z, x + a * y, b + z * (x - c));
  };
  auto jac = [=](const VectorXd& s) {
    check_state(s, "rossler");
    MatrixXd j(3, 3);
    j << 0.0, -1.0, -1.0,
         1.0, a, 0.0,
         s[2], 0.0, s[0] - c;
    return j;
  };
  return System("rossler", 3, p, field, jac);
}

System chen(const ParamMap& p) {
  const double a = p.at("a"), b = p.at("b"), c = p.at("c");
  auto field = [=](const VectorXd& s) {
    check_state(s, "chen");
    const double x = s[0], y = s[1], z = s[2];
    return vec3(a * (y - x), (c - a) * x - x * z + c * y, x * y - b * z);
  };
  auto jac = [=](const VectorXd& s) {
    check_state(s, "chen");
    const double x = s[0], y = s[1], z = s[2];
    MatrixXd j(3, 3);
    j << -a, a, 0.0,
         c - a - z, c, -x,
         y, x, -b;
    return j;
  };
  return System("chen", 3, p, field, jac);
}

System lu(const ParamMap& p) {
  const double a = p.at("a"), b = p.at("b"), c = p.at("c"), u = p.at("u");
  auto field = [=](const VectorXd& s) {
    check_state(s, "lu");
    const double x = s[0], y = s[1], z = s[2];
    return vec3(a * (y - x), -x * z + c * y + u, x * y - b * z);
  };
  auto jac = [=](const VectorXd& s) {
    check_state(s, "lu");
    const double x = s[0], y = s[1], z = s[2];
    MatrixXd j(3, 3);
    j << -a, a, 0.0,
         -z, c, -x,
         y, x, -b;
    return j;
  };
  return System("lu", 3, p, field, jac);
}

}  // namespace

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {"lorenz", "chua", "rossler", "chen", "lu"};
  return names;
}

ParamMap default_params(std::string_view name) {
  if (name == "lorenz") return {{"sigma", 10.0}, {"b", 8.0 / 3.0}, {"r", 28.0}};
  if (name == "chua") return {{"alpha", 10.0}, {"beta", 15.0}, {"m0", -1.2}, {"m1", -0.6}};
  if (name == "rossler") return {{"a", 0.2}, {"b", 0.2}, {"c", 5.7}};
  if (name == "chen") return {{"a", 40.0}, {"b", 3.0}, {"c", 28.0}};
  if (name == "lu") return {{"a", 36.0}, {"b", 3.0}, {"c", 20.0}, {"u", 0.0}};
  throw CatalogError("unknown system '" + std::string(name) + "'");
}

System make_system(std::string_view name, const ParamMap& overrides) {
  ParamMap params = default_params(name);
  for (const auto& [key, value] : overrides) {
    auto it = params.find(key);
    if (it == params.end())
      throw ConfigError("unknown parameter '" + key + "' for system '" + std::string(name) + "'");
    it->second = value;
  }
  if (name == "lorenz") return lorenz(params);
  if (name == "chua") return chua(params);
  if (name == "rossler") return rossler(params);
  if (name == "chen") return chen(params);
  return lu(params);
}

System make_hybrid(const System& f, const System& g) {
  if (f.dim() != g.dim())
    throw ConfigError("cannot blend '" + f.name() + "' (dim " + std::to_string(f.dim()) +
                      ") with '" + g.name() + "' (dim " + std::to_string(g.dim()) + ")");
  if (f.is_hybrid() || g.is_hybrid()) throw ConfigError("nested hybrids are not supported");

  ParamMap params;
  for (const auto& [k, v] : f.params()) params[f.name() + "." + k] = v;
  for (const auto& [k, v] : g.params()) params[g.name() + "." + k] = v;

  System h("hybrid(" + f.name() + "," + g.name() + ")", f.dim(), std::move(params), nullptr,
           nullptr);
  h.hybrid_ = std::make_shared<const System::Hybrid>(System::Hybrid{f, g});
  return h;
}

System make_custom(std::string name, int dim, FieldFn field, JacobianFn jacobian) {
  if (!field || !jacobian) throw ConfigError("custom system '" + name + "' needs both evaluators");
  return System(std::move(name), dim, {}, std::move(field), std::move(jacobian));
}

}  // namespace orbsim
