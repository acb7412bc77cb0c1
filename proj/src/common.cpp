#include "sbm/common.hpp"

#include <cmath>

namespace sbm {

NumericalAbort::NumericalAbort(std::size_t step, std::size_t node, const std::string& scheme)
    : std::runtime_error(scheme + ": non-finite value at step " + std::to_string(step) + ", node " +
                         std::to_string(node)),
      step_(step),
      node_(node) {}

bool Grid1D::covers(double point, double tol) const noexcept {
  if (size == 0) return false;
  return point >= front() - tol * dx && point <= back() + tol * dx;
}

std::optional<std::size_t> Grid1D::node_at(double point, double tol) const noexcept {
  if (!covers(point, tol)) return std::nullopt;
  const double r = (point - origin) / dx;
  const double k = std::round(r);
  if (std::abs(r - k) > tol * std::max(1.0, std::abs(r))) return std::nullopt;
  if (k < 0.0 || k >= static_cast<double>(size)) return std::nullopt;
  return static_cast<std::size_t>(k);
}

Grid1D Grid1D::symmetric(double half_width, double dx) { return span_of(-half_width, half_width, dx); }

Grid1D Grid1D::span_of(double a, double b, double dx) {
  if (!(dx > 0.0)) throw DomainError("grid spacing must be positive");
  if (!(b > a)) throw DomainError("grid interval must be nonempty");
  const double cells = (b - a) / dx;
  const double k = std::round(cells);
  if (std::abs(cells - k) > 1e-8 * std::max(1.0, cells))
    throw DomainError("grid interval length is not a multiple of dx");
  return Grid1D{a, dx, static_cast<std::size_t>(k) + 1};
}

GridField::GridField(Grid1D g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size) throw DomainError("field size does not match grid");
}

double GridField::interpolate(double point) const {
  if (!grid.covers(point)) throw DomainError("interpolation point outside grid");
  if (grid.size == 1) return values[0];
  double r = (point - grid.origin) / grid.dx;
  if (r <= 0.0) return values.front();
  const double last = static_cast<double>(grid.size - 1);
  if (r >= last) return values.back();
  const auto i = static_cast<std::size_t>(std::floor(r));
  const double w = r - static_cast<double>(i);
  if (w == 0.0) return values[i];
  return (1.0 - w) * values[i] + w * values[i + 1];
}

void CompensatedSum::add(double v) noexcept {
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v))
    comp_ += (sum_ - t) + v;
  else
    comp_ += (v - t) + sum_;
  sum_ = t;
}

double trapezoid(std::span<const double> v, double dx) {
  if (v.size() < 2) return 0.0;
  double s = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
  return s * dx;
}

double trapezoid_product(std::span<const double> f, std::span<const double> g, double dx) {
  const std::size_t n = std::min(f.size(), g.size());
  if (n < 2) return 0.0;
  double s = 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]);
  for (std::size_t i = 1; i + 1 < n; ++i) s += f[i] * g[i];
  return s * dx;
}

std::vector<double> cumulative_trapezoid(std::span<const double> v, double dx) {
  std::vector<double> out(v.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    acc += 0.5 * dx * (v[i - 1] + v[i]);
    out[i] = acc;
  }
  return out;
}

}  // namespace sbm
