#include "sbm/branching.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sbm {

RateFunction::RateFunction(Kind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {}

RateFunction RateFunction::constant(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("rate 'constant' needs c > 0");
  return RateFunction(Kind::constant, {c});
}

RateFunction RateFunction::reciprocal(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("rate 'reciprocal' needs c > 0");
  return RateFunction(Kind::reciprocal, {c});
}

RateFunction RateFunction::exponential(double c1, double c2) {
  if (!(c1 > 0.0) || !(c2 >= 0.0) || !std::isfinite(c1) || !std::isfinite(c2))
    throw ConfigError("rate 'exponential' needs c1 > 0 and c2 >= 0");
  return RateFunction(Kind::exponential, {c1, c2});
}

const std::vector<std::string>& RateFunction::registry() {
  static const std::vector<std::string> names{"constant", "reciprocal", "exponential"};
  return names;
}

RateFunction RateFunction::from_name(std::string_view name, const std::vector<double>& params) {
  auto need = [&](std::size_t k) {
    if (params.size() != k) {
      std::ostringstream os;
      os << "rate '" << name << "' takes " << k << " parameter(s), got " << params.size();
      throw ConfigError(os.str());
    }
  };
  if (name == "constant") {
    need(1);
    return constant(params[0]);
  }
  if (name == "reciprocal") {
    need(1);
    return reciprocal(params[0]);
  }
  if (name == "exponential") {
    need(2);
    return exponential(params[0], params[1]);
  }
  std::ostringstream os;
  os << "unknown rate function '" << name << "'; registry:";
  for (const auto& r : registry()) os << ' ' << r;
  throw ConfigError(os.str());
}

double RateFunction::operator()(double z) const noexcept {
  z = std::max(z, 0.0);
  switch (kind_) {
    case Kind::constant:
      return params_[0];
    case Kind::reciprocal:
      return params_[0] / (1.0 + z);
    case Kind::exponential:
      return params_[0] + params_[1] * std::exp(-z);
  }
  return 0.0;
}

double RateFunction::sup_bound() const noexcept {
  switch (kind_) {
    case Kind::constant:
    case Kind::reciprocal:
      return params_[0];
    case Kind::exponential:
      return params_[0] + params_[1];
  }
  return 0.0;
}

std::string_view RateFunction::name() const noexcept { return registry()[static_cast<std::size_t>(kind_)]; }

void BranchingSpec::validate() const {
  if (rates.size() != partition.size() + 1) {
    std::ostringstream os;
    os << "branching: " << partition.size() << " partition point(s) need " << partition.size() + 1
       << " rate function(s), got " << rates.size();
    throw ConfigError(os.str());
  }
  for (std::size_t i = 0; i < partition.size(); ++i) {
    if (!std::isfinite(partition[i])) throw ConfigError("branching: partition points must be finite");
    if (i > 0 && !(partition[i] > partition[i - 1]))
      throw ConfigError("branching: partition must be strictly increasing");
  }
  if (!(beta >= 0.5 && beta <= 1.0)) throw ConfigError("branching: beta must lie in [1/2, 1]");
}

std::size_t BranchingSpec::cell_of(double x) const noexcept {
  return static_cast<std::size_t>(std::upper_bound(partition.begin(), partition.end(), x) - partition.begin());
}

double BranchingSpec::max_rate_bound() const noexcept {
  double b = 0.0;
  for (const auto& g : rates) b = std::max(b, g.sup_bound());
  return b * b;
}

BranchingSpec BranchingSpec::constant_rate(double c) { return BranchingSpec{{}, {RateFunction::constant(c)}, 1.0}; }

std::vector<double> cell_rates(const BranchingSpec& spec, const DensityField& mu) {
  const std::size_t n = spec.n();
  std::vector<double> out(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = spec.partition[i];
    if (!mu.grid.covers(a)) {
      std::ostringstream os;
      os << "branching: density grid [" << mu.grid.front() << ", " << mu.grid.back()
         << "] does not cover partition point " << a;
      throw ConfigError(os.str());
    }
    const double g = spec.rates[i](mu.interpolate(a));
    out[i] = g * g;
  }
  const double start = n == 0 ? mu.grid.front() : spec.partition.back();
  if (n > 0 && !mu.grid.covers(start)) throw ConfigError("branching: density grid does not cover a_n");
  const double g = spec.rates[n](tail_mass(mu, start));
  out[n] = g * g;
  return out;
}

double gamma_eval(const BranchingSpec& spec, const DensityField& mu, double x) {
  return cell_rates(spec, mu)[spec.cell_of(x)];
}

std::vector<double> rate_field(const BranchingSpec& spec, const DensityField& mu) {
  const auto rates = cell_rates(spec, mu);
  std::vector<double> out(mu.grid.size);
  std::size_t cell = 0;
  for (std::size_t i = 0; i < mu.grid.size; ++i) {
    const double x = mu.grid.x(i);
    while (cell < spec.n() && x >= spec.partition[cell]) ++cell;
    out[i] = rates[cell];
  }
  return out;
}

double tail_mass(const DensityField& mu, double a) {
  const Grid1D& g = mu.grid;
  if (g.size == 0) throw DomainError("tail_mass: empty grid");
  if (a > g.back() + 1e-12 * g.dx) throw DomainError("tail_mass: lower limit beyond the grid edge");
  if (g.size == 1) return 0.0;
  if (a <= g.front()) return trapezoid(mu.values, g.dx);
  const double r = (a - g.origin) / g.dx;
  auto k = static_cast<std::size_t>(std::ceil(r - 1e-9));
  k = std::min(k, g.size - 1);
  double s = trapezoid(std::span<const double>(mu.values).subspan(k), g.dx);
  const double gap = g.x(k) - a;
  if (gap > 1e-12 * g.dx) s += 0.5 * gap * (mu.interpolate(a) + mu.values[k]);
  return s;
}

double gradient_at(const GridField& u, double point) {
  const Grid1D& g = u.grid;
  if (g.size < 3) throw DomainError("gradient_at: needs at least three grid nodes");
  const auto node = g.node_at(point);
  if (!node) throw DomainError("gradient_at: point is not a grid node");
  const std::size_t i = *node;
  const auto& v = u.values;
  if (i == 0) return (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * g.dx);
  if (i < 2) throw DomainError("gradient_at: fewer than three nodes on the differencing side");
  return (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * g.dx);
}

double generalized_inverse(const GridField& u, double y) {
  const auto& v = u.values;
  if (v.empty()) throw DomainError("generalized_inverse: empty field");
  if (v.front() > y) return u.grid.front();
  // Last node with v <= y; v is nondecreasing so the predicate is monotone.
  const auto it = std::upper_bound(v.begin(), v.end(), y);
  const auto j = static_cast<std::size_t>(it - v.begin()) - 1;
  if (j + 1 >= v.size()) return u.grid.x(j);
  const double rise = v[j + 1] - v[j];
  if (rise <= 0.0) return u.grid.x(j);
  return u.grid.x(j) + u.grid.dx * (y - v[j]) / rise;
}

}  // namespace sbm
