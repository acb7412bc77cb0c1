#include "sbm/kernels.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>

namespace sbm::kernels {
namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

template <class F>
double gauss_panels(F&& f, double a, double b, int panels) {
  using boost::math::quadrature::gauss;
  if (!(b > a)) return 0.0;
  const double h = (b - a) / panels;
  double s = 0.0;
  for (int i = 0; i < panels; ++i) s += gauss<double, 30>::integrate(f, a + i * h, a + (i + 1) * h);
  return s;
}

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double raw_mollifier(double x) {
  const double g = 1.0 - x * x;
  return g > 0.0 ? std::exp(-1.0 / g) : 0.0;
}

double mollifier_constant() {
  static const double c = 1.0 / gauss_panels(raw_mollifier, -1.0, 1.0, 16);
  return c;
}

}  // namespace

double heat_kernel(double t, double x) {
  if (!(t > 0.0)) throw DomainError("heat_kernel: time must be positive");
  return kInvSqrt2Pi / std::sqrt(t) * std::exp(-x * x / (2.0 * t));
}

double dirichlet_kernel(double t, double x, double y, double a) {
  if (!(t > 0.0)) throw DomainError("dirichlet_kernel: time must be positive");
  return heat_kernel(t, x - y) - heat_kernel(t, x + y - 2.0 * a);
}

GridField semigroup_convolve(const GridField& f, double t, double half_width_sigmas) {
  if (f.grid.size == 0 || f.values.empty()) throw DomainError("semigroup_convolve: empty grid");
  if (!(t > 0.0)) throw DomainError("semigroup_convolve: time must be positive");
  const std::size_t n = f.grid.size;
  const double dx = f.grid.dx;
  const auto reach = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(n), std::floor(half_width_sigmas * std::sqrt(t) / dx)));
  std::vector<double> kernel(reach + 1);
  for (std::size_t d = 0; d <= reach; ++d) kernel[d] = heat_kernel(t, static_cast<double>(d) * dx);

  GridField out(f.grid);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > reach ? i - reach : 0;
    const std::size_t hi = std::min(n - 1, i + reach);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) {
      const double w = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      s += w * kernel[i > j ? i - j : j - i] * f.values[j];
    }
    out.values[i] = s * dx;
  }
  return out;
}

double g_m_coefficient(int m, double x) {
  if (m < 1) throw DomainError("g_m_coefficient: m must be >= 1");
  if (!(x >= 0.0)) throw DomainError("g_m_coefficient: x must be nonnegative");
  const double md = static_cast<double>(m);
  const double cap = md * md;  // sqrt|y| reaches m at |y| = m^2
  const double s = 1.0 / std::sqrt(md);
  const double reach = 12.0 * s;
  const double norm = kInvSqrt2Pi / s;

  // y beyond +-m^2: integrand is the constant m.
  double total = md * upper_normal_tail((cap - x) / s) + md * upper_normal_tail((x + cap) / s);

  // y = v^2 on [0, m^2] and y = -v^2 on [-m^2, 0]; the substitution removes the kink at 0.
  const double v_lo = std::sqrt(std::max(0.0, x - reach));
  const double v_hi = std::sqrt(std::min(cap, x + reach));
  if (v_hi > v_lo) {
    total += gauss_panels(
        [&](double v) {
          const double d = v * v - x;
          return 2.0 * v * v * norm * std::exp(-d * d / (2.0 * s * s));
        },
        v_lo, v_hi, 16);
  }
  if (x < reach) {
    const double w_hi = std::sqrt(std::min(cap, reach - x));
    total += gauss_panels(
        [&](double v) {
          const double d = v * v + x;
          return 2.0 * v * v * norm * std::exp(-d * d / (2.0 * s * s));
        },
        0.0, w_hi, 16);
  }
  return total;
}

GmTable::GmTable(int m, double x_max) : m_(m), x_max_(x_max) {
  if (m < 1) throw DomainError("GmTable: m must be >= 1");
  if (!(x_max > 0.0)) throw DomainError("GmTable: x_max must be positive");
  step_ = std::min(1e-3, 0.05 / std::sqrt(static_cast<double>(m)));
  const auto n = static_cast<std::size_t>(std::ceil(x_max / step_)) + 1;
  table_.resize(n);
  for (std::size_t i = 0; i < n; ++i) table_[i] = g_m_coefficient(m, static_cast<double>(i) * step_);
  x_max_ = static_cast<double>(n - 1) * step_;
}

double GmTable::operator()(double x) const {
  if (x <= 0.0) return table_.front();
  if (x >= x_max_) return g_m_coefficient(m_, x);
  const double r = x / step_;
  const auto i = static_cast<std::size_t>(r);
  const double w = r - static_cast<double>(i);
  return (1.0 - w) * table_[i] + w * table_[i + 1];
}

double mollifier(double x) { return mollifier_constant() * raw_mollifier(x); }

double bump(double x) { return 2.0 * mollifier(2.0 * x - 1.0); }

double bump_derivative(double x) {
  const double y = 2.0 * x - 1.0;
  const double g = 1.0 - y * y;
  if (g <= 0.0) return 0.0;
  // d/dy exp(-1/g) = exp(-1/g) * (-2y / g^2); chain rule contributes a factor 2.
  return 4.0 * mollifier(y) * (-2.0 * y / (g * g));
}

double bump_cdf(double z) {
  if (z <= 0.0) return 0.0;
  if (z >= 1.0) return 1.0;
  // Integrate over the shorter side; the bump is symmetric about 1/2.
  if (z > 0.5) return 1.0 - bump_cdf(1.0 - z);
  return gauss_panels([](double y) { return mollifier(y); }, -1.0, 2.0 * z - 1.0, 8);
}

double weight_j(double x) {
  auto integrand = [x](double s) { return std::exp(-std::abs(x - s)) * mollifier(s); };
  if (x > -1.0 && x < 1.0) return gauss_panels(integrand, -1.0, x, 16) + gauss_panels(integrand, x, 1.0, 16);
  return gauss_panels(integrand, -1.0, 1.0, 16);
}

HkValue h_k(int k, double x) {
  if (k < 1) throw DomainError("h_k: k must be >= 1");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("h_k: x must lie in [0, 1]");
  const double kd = static_cast<double>(k);
  const double kx = kd * x;
  const double xk = std::pow(x, kd);
  const double left = bump_cdf(kx);          // int_0^{kx} Phi
  const double right = 1.0 - bump_cdf(xk);   // int_{x^k}^1 Phi
  const double phi_kx = bump(kx);
  const double phi_xk = bump(xk);
  const double dphi_kx = bump_derivative(kx);
  const double dphi_xk = bump_derivative(xk);
  const double xk1 = k >= 2 ? std::pow(x, kd - 1.0) : 1.0;  // x^{k-1}

  HkValue out{};
  out.value = left * right;
  out.d1 = kd * phi_kx * right - kd * xk1 * phi_xk * left;

  double inner_term = 0.0;
  if (phi_xk != 0.0 && k >= 2) inner_term += kd * (kd - 1.0) * std::pow(x, kd - 2.0) * phi_xk;
  if (dphi_xk != 0.0) inner_term += kd * kd * xk1 * xk1 * dphi_xk;
  out.d2 = kd * kd * dphi_kx * right - 2.0 * kd * kd * xk1 * phi_kx * phi_xk - inner_term * left;
  return out;
}

}  // namespace sbm::kernels
