#pragma once

#include <vector>

#include "sbm/common.hpp"

// Closed-form kernels and special functions shared by the schemes and the checks.
namespace sbm::kernels {

/// Gaussian transition density of Brownian motion, (2*pi*t)^{-1/2} exp(-x^2 / (2t)).
double heat_kernel(double t, double x);

/// Heat kernel on (a, inf) killed at a: p_t(x - y) - p_t(x + y - 2a).
/// Vanishes at x = a and at y = a for every t.
double dirichlet_kernel(double t, double x, double y, double a);

/// Grid samples of the heat semigroup applied to f, by trapezoid quadrature.
/// The kernel is truncated at half_width_sigmas * sqrt(t).
GridField semigroup_convolve(const GridField& f, double t, double half_width_sigmas = 8.0);

/// Gaussian smoothing (bandwidth 1/m) of the truncated root min(sqrt|y|, m), evaluated at x >= 0.
double g_m_coefficient(int m, double x);

/// Tabulated G_m on [0, x_max] with linear interpolation; falls back to direct quadrature
/// above x_max. Hot-loop accelerator for the blocked scheme.
class GmTable {
 public:
  GmTable(int m, double x_max);
  double operator()(double x) const;
  int m() const noexcept { return m_; }

 private:
  int m_;
  double step_;
  double x_max_;
  std::vector<double> table_;
};

/// Mollifier C exp(-1/(1 - x^2)) on (-1, 1) with unit integral.
double mollifier(double x);

/// Unit-integral bump on (0, 1): the mollifier shape rescaled to the unit interval.
double bump(double x);
double bump_derivative(double x);
/// Integral of the bump over [0, z]; 0 below 0 and 1 above 1.
double bump_cdf(double z);

/// Mollified exponential weight J(x) = int e^{-|y|} rho(x - y) dy.
double weight_j(double x);

struct HkValue {
  double value;
  double d1;
  double d2;
};

/// Appendix test function h_k(x) = B(kx) * (1 - B(x^k)) with B the bump cdf,
/// together with its first and second derivatives. Requires k >= 1, x in [0, 1].
HkValue h_k(int k, double x);

}  // namespace sbm::kernels
