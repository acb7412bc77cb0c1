#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sbm/common.hpp"

namespace sbm {

/// A bounded positive rate function g: R_+ -> R_+ drawn from a fixed registry of analytic forms.
///
///   constant     g(z) = c
///   reciprocal   g(z) = c / (1 + z)
///   exponential  g(z) = c1 + c2 * exp(-z)
class RateFunction {
 public:
  enum class Kind { constant, reciprocal, exponential };

  static RateFunction constant(double c);
  static RateFunction reciprocal(double c);
  static RateFunction exponential(double c1, double c2);
  /// Looks up a registry entry by name; throws ConfigError listing the registry on a miss.
  static RateFunction from_name(std::string_view name, const std::vector<double>& params);
  static const std::vector<std::string>& registry();

  /// Evaluates at max(z, 0).
  double operator()(double z) const noexcept;
  double sup_bound() const noexcept;
  Kind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept;
  const std::vector<double>& params() const noexcept { return params_; }
  bool is_constant() const noexcept { return kind_ == Kind::constant; }

 private:
  RateFunction(Kind kind, std::vector<double> params);
  Kind kind_;
  std::vector<double> params_;
};

/// Piecewise interacting branching rate: partition a_1 < ... < a_n and rates g_0..g_n.
/// On [a_i, a_{i+1}) the rate is g_i(mu(a_{i+1}))^2 for i < n; on [a_n, inf) it is
/// g_n(mass beyond a_n)^2. With n = 0 the rate depends on the total mass only.
struct BranchingSpec {
  std::vector<double> partition;
  std::vector<RateFunction> rates;
  /// Hölder exponent of g_n. Metadata only.
  double beta = 1.0;

  std::size_t n() const noexcept { return partition.size(); }
  /// Throws ConfigError on a non-increasing partition, a rate count mismatch or beta outside [1/2, 1].
  void validate() const;
  /// Index i with a_i <= x < a_{i+1}.
  std::size_t cell_of(double x) const noexcept;
  double max_rate_bound() const noexcept;

  static BranchingSpec constant_rate(double c);
};

/// gamma(mu, x). Throws ConfigError if the grid of mu does not cover a required partition point.
double gamma_eval(const BranchingSpec& spec, const DensityField& mu, double x);

/// gamma(mu, .) at every node of mu's grid. Piecewise constant across partition cells.
std::vector<double> rate_field(const BranchingSpec& spec, const DensityField& mu);
/// Per-cell rates gamma_i, i = 0..n.
std::vector<double> cell_rates(const BranchingSpec& spec, const DensityField& mu);

/// Trapezoid integral of mu over [a, right edge of the grid]. Mass beyond the grid is ignored.
double tail_mass(const DensityField& mu, double a);

/// Second-order one-sided difference of u at a grid node: forward at the first node,
/// backward otherwise. Needs at least three nodes on the differencing side.
double gradient_at(const GridField& u, double point);

/// sup{x on the grid of u : u(x) <= y}, with linear interpolation between the last node at or
/// below y and its successor. Returns the first node when the set is empty.
double generalized_inverse(const GridField& u, double y);

}  // namespace sbm
