#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "sbm/kernels.hpp"

using namespace sbm;
using namespace sbm::kernels;

namespace {

double golden_j0() {
  std::ifstream in(SBM_TEST_DATA "/golden_j0.txt");
  double v = 0.0;
  in >> v;
  REQUIRE(in);
  return v;
}

}  // namespace

TEST_CASE("heat kernel values and normalization") {
  CHECK(heat_kernel(1.0, 0.0) == doctest::Approx(0.3989423).epsilon(1e-7));
  CHECK(heat_kernel(0.5, 1.0) == doctest::Approx(0.2075537).epsilon(1e-7));
  const auto g = Grid1D::symmetric(8.0, 0.01);
  const auto f = GridField::sample(g, [](double x) { return heat_kernel(1.0, x); });
  CHECK(std::abs(trapezoid(f.values, g.dx) - 1.0) <= 1e-6);
  CHECK_THROWS_AS(heat_kernel(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(heat_kernel(-1.0, 1.0), DomainError);
}

TEST_CASE("Chapman-Kolmogorov by quadrature") {
  const double s = 0.3, t = 0.5, dx = 0.005;
  const auto g = Grid1D::symmetric(8.0, dx);
  for (double x : {-1.5, -0.2, 0.0, 0.7, 2.0}) {
    const auto f = GridField::sample(g, [&](double y) { return heat_kernel(s, x - y) * heat_kernel(t, y); });
    CHECK(std::abs(trapezoid(f.values, dx) - heat_kernel(s + t, x)) <= 1e-5);
  }
}

TEST_CASE("half-line kernel") {
  CHECK(dirichlet_kernel(1.0, 0.0, 0.7, 0.0) == 0.0);
  CHECK(std::abs(dirichlet_kernel(1.0, 2.5, 3.1, 2.5)) <= 1e-15);
  CHECK(dirichlet_kernel(1.0, 1.0, 1.0, 0.0) == doctest::Approx(0.3449513).epsilon(1e-7));
  for (double a : {-1.0, 0.0, 0.5})
    for (double x : {a, a + 0.3, a + 2.0})
      for (double y : {a + 0.1, a + 1.0}) {
        CHECK(dirichlet_kernel(0.7, x, y, a) == doctest::Approx(dirichlet_kernel(0.7, y, x, a)).epsilon(1e-14));
        CHECK(dirichlet_kernel(0.7, x, y, a) >= 0.0);
      }
  CHECK_THROWS_AS(dirichlet_kernel(0.0, 1.0, 1.0, 0.0), DomainError);

  // Survival mass grows to 1 as the start point moves away from the boundary.
  double prev = 0.0;
  for (double x : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    const auto g = Grid1D::span_of(0.0, 16.0, 0.005);
    const auto f = GridField::sample(g, [&](double y) { return dirichlet_kernel(1.0, x, y, 0.0); });
    const double mass = trapezoid(f.values, g.dx);
    CHECK(mass >= 0.0);
    CHECK(mass <= 1.0 + 1e-9);
    CHECK(mass > prev);
    prev = mass;
  }
  CHECK(prev > 0.99);
}

TEST_CASE("semigroup closure on Gaussians") {
  const double sigma2 = 0.25, t = 0.5;
  const auto g = Grid1D::symmetric(8.0, 0.01);
  const auto f = GridField::sample(g, [&](double x) { return heat_kernel(sigma2, x); });
  const auto out = semigroup_convolve(f, t);
  double err = 0.0;
  for (std::size_t i = 0; i < g.size; ++i) err = std::max(err, std::abs(out[i] - heat_kernel(sigma2 + t, g.x(i))));
  CHECK(err <= 1e-4);
  CHECK(std::abs(trapezoid(out.values, g.dx) - trapezoid(f.values, g.dx)) <= 1e-6);
  for (double v : out.values) CHECK(v >= 0.0);

  const auto zero = semigroup_convolve(GridField(g), t);
  for (double v : zero.values) CHECK(v == 0.0);
  CHECK_THROWS_AS(semigroup_convolve(GridField(), t), DomainError);
}

TEST_CASE("truncated root smoothing") {
  // E|Z|^{1/2} = 2^{1/4} Gamma(3/4) / sqrt(pi).
  const double c = std::pow(2.0, 0.25) * std::tgamma(0.75) / std::sqrt(std::numbers::pi);
  CHECK(c == doctest::Approx(0.8221789586624588).epsilon(1e-14));
  for (int m : {16, 32, 64, 100, 256, 1024})
    CHECK(std::abs(g_m_coefficient(m, 0.0) / (c * std::pow(m, -0.25)) - 1.0) <= 0.01);
  CHECK(std::abs(g_m_coefficient(100, 4.0) - 2.0) <= 0.01);
  for (int m : {1, 2, 4, 16, 100})
    for (double x = 0.0; x <= 50.0; x += 0.25) CHECK(g_m_coefficient(m, x) <= 1.0 + std::sqrt(1.0 + x * x));
  for (int m : {4, 16, 64}) {
    double prev = g_m_coefficient(m, 1.0);
    for (double x = 1.0; x <= 20.0; x += 0.05) {
      const double v = g_m_coefficient(m, x);
      CHECK(v >= prev - 1e-13);
      prev = v;
    }
  }
  for (double x : {0.5, 1.0, 3.0}) {
    // Small m overshoots near the origin, so the approach is monotone only from m = 16 on.
    double prev = 1e9;
    for (int m : {16, 64, 256, 1024}) {
      const double d = std::abs(g_m_coefficient(m, x) - std::sqrt(x));
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
    CHECK(prev < 1e-3);
  }
  CHECK_THROWS_AS(g_m_coefficient(0, 1.0), DomainError);
  CHECK_THROWS_AS(g_m_coefficient(4, -1.0), DomainError);

  const GmTable table(8, 10.0);
  for (double x : {0.0, 0.013, 0.5, 3.3, 9.99, 12.0})
    CHECK(table(x) == doctest::Approx(g_m_coefficient(8, x)).epsilon(1e-6));
}

TEST_CASE("bumps") {
  const auto g = Grid1D::symmetric(1.0, 1e-4);
  const auto rho = GridField::sample(g, mollifier);
  CHECK(trapezoid(rho.values, g.dx) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mollifier(1.0) == 0.0);
  CHECK(mollifier(-1.2) == 0.0);
  const auto u = Grid1D::span_of(0.0, 1.0, 1e-4);
  const auto phi = GridField::sample(u, bump);
  CHECK(trapezoid(phi.values, u.dx) == doctest::Approx(1.0).epsilon(1e-9));
  for (double v : phi.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
  CHECK(bump_cdf(-0.5) == 0.0);
  CHECK(bump_cdf(1.5) == 1.0);
  CHECK(bump_cdf(0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("weight J") {
  const double j0 = weight_j(0.0);
  CHECK(std::abs(j0 - golden_j0()) <= 1e-12);
  CHECK(weight_j(0.0) == j0);
  for (double x = -12.0; x <= 12.0; x += 0.37) {
    const double j = weight_j(x);
    CHECK(j == doctest::Approx(weight_j(-x)).epsilon(1e-14));
    CHECK(j >= std::exp(-std::abs(x) - 1.0));
    CHECK(j <= std::exp(-std::abs(x) + 1.0));
  }
}

TEST_CASE("h_k derivative identities") {
  for (int k : {1, 2, 4, 8, 16, 32}) {
    const double h = 1e-5;
    for (double x = 1e-3 + 0.0123; x < 1.0 - 1e-3; x += 0.0371) {
      const auto v = h_k(k, x);
      const double d1 = (h_k(k, x + h).value - h_k(k, x - h).value) / (2 * h);
      const double d2 = (h_k(k, x + h).d1 - h_k(k, x - h).d1) / (2 * h);
      CHECK(std::abs(d1 - v.d1) <= 1e-6 * std::max(1.0, std::abs(v.d1)));
      CHECK(std::abs(d2 - v.d2) <= 1e-5 * std::max(1.0, std::abs(v.d2)));
      CHECK(v.value >= 0.0);
      CHECK(v.value <= 1.0);
    }
  }
  CHECK(h_k(8, 0.0).value == 0.0);
  CHECK(h_k(8, 1.0).value == 0.0);
  CHECK_THROWS_AS(h_k(0, 0.5), DomainError);
  CHECK_THROWS_AS(h_k(4, 1.5), DomainError);
}
