#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbm {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A check refused to run because its input is too small or too coarse.
class Refusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced while stepping a scheme.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(std::size_t step, std::size_t node, const std::string& scheme);

  std::size_t step() const noexcept { return step_; }
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t step_;
  std::size_t node_;
};

/// Uniform one-dimensional grid: nodes origin + i*dx for i in [0, size).
struct Grid1D {
  double origin = 0.0;
  double dx = 1.0;
  std::size_t size = 0;

  double x(std::size_t i) const noexcept { return origin + static_cast<double>(i) * dx; }
  double front() const noexcept { return origin; }
  double back() const noexcept { return x(size == 0 ? 0 : size - 1); }
  bool covers(double point, double tol = 1e-9) const noexcept;

  /// Index of the node at `point`, if `point` lies on the grid within tol*dx.
  std::optional<std::size_t> node_at(double point, double tol = 1e-9) const noexcept;

  /// Symmetric grid [-half_width, half_width]; half_width must be a multiple of dx.
  static Grid1D symmetric(double half_width, double dx);
  /// Grid on [a, b] with spacing dx; (b - a) must be a multiple of dx.
  static Grid1D span_of(double a, double b, double dx);
};

/// Values sampled on a Grid1D. Used for densities, distribution functions and test functions.
struct GridField {
  Grid1D grid;
  std::vector<double> values;

  GridField() = default;
  GridField(Grid1D g, std::vector<double> v);
  explicit GridField(Grid1D g) : grid(g), values(g.size, 0.0) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
  double& operator[](std::size_t i) noexcept { return values[i]; }

  /// Linear interpolation; throws DomainError outside the grid.
  double interpolate(double point) const;

  template <class F>
  static GridField sample(Grid1D g, F&& f) {
    GridField out(g);
    for (std::size_t i = 0; i < g.size; ++i) out.values[i] = f(g.x(i));
    return out;
  }
};

using DensityField = GridField;

/// Neumaier-compensated accumulator. Merge order is the caller's.
class CompensatedSum {
 public:
  void add(double v) noexcept;
  double value() const noexcept { return sum_ + comp_; }
  CompensatedSum& operator+=(double v) noexcept {
    add(v);
    return *this;
  }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double trapezoid(std::span<const double> v, double dx);
/// Trapezoid integral of f*g sampled on the same nodes.
double trapezoid_product(std::span<const double> f, std::span<const double> g, double dx);
/// out[i] = trapezoid integral of v over nodes [0, i].
std::vector<double> cumulative_trapezoid(std::span<const double> v, double dx);

}  // namespace sbm
