#include <doctest.h>

#include <cmath>

#include "sbm/branching.hpp"
#include "sbm/kernels.hpp"
#include "sbm/stats.hpp"

using namespace sbm;

namespace {

DensityField standard_gaussian(double L, double dx) {
  return GridField::sample(Grid1D::symmetric(L, dx), [](double x) { return kernels::heat_kernel(1.0, x); });
}

}  // namespace

TEST_CASE("rate registry") {
  CHECK(RateFunction::constant(2.0)(5.0) == 2.0);
  CHECK(RateFunction::reciprocal(1.0)(1.0) == 0.5);
  CHECK(RateFunction::exponential(1.0, 2.0)(0.0) == 3.0);
  CHECK(RateFunction::reciprocal(1.0)(-3.0) == 1.0);
  CHECK(RateFunction::exponential(1.0, 2.0).sup_bound() == 3.0);
  CHECK(RateFunction::from_name("reciprocal", {2.0})(1.0) == 1.0);
  try {
    RateFunction::from_name("quadratic", {1.0});
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& name : RateFunction::registry()) CHECK(msg.find(name) != std::string::npos);
  }
  CHECK_THROWS_AS(RateFunction::from_name("constant", {}), ConfigError);
  CHECK_THROWS_AS(RateFunction::constant(0.0), ConfigError);
}

TEST_CASE("partition and rate validation") {
  BranchingSpec s;
  s.partition = {0.0, 0.0};
  s.rates = {RateFunction::constant(1), RateFunction::constant(1), RateFunction::constant(1)};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.partition = {0.0, 1.0};
  s.validate();
  s.beta = 0.4;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.beta = 1.0;
  s.rates.pop_back();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("gamma evaluation") {
  const auto mu = standard_gaussian(8.0, 0.01);
  const auto one = BranchingSpec::constant_rate(1.0);
  for (double x : {-7.0, 0.0, 3.3}) CHECK(gamma_eval(one, mu, x) == 1.0);

  BranchingSpec s;
  s.partition = {0.0};
  s.rates = {RateFunction::constant(2.0), RateFunction::reciprocal(1.0)};
  CHECK(gamma_eval(s, mu, -3.0) == 4.0);

  // Tail mass 1 beyond the partition point gives (1/2)^2.
  const auto g = Grid1D::symmetric(8.0, 0.01);
  const auto tail = GridField::sample(g, [](double x) { return x >= 0.0 ? 2.0 * kernels::heat_kernel(1.0, x) : 0.0; });
  CHECK(gamma_eval(s, tail, 2.0) == doctest::Approx(0.25).epsilon(1e-4));

  // Constant within each cell, bounded by the largest squared sup bound.
  BranchingSpec t;
  t.partition = {-1.0, 0.5};
  t.rates = {RateFunction::reciprocal(1.5), RateFunction::exponential(0.5, 1.0), RateFunction::constant(1.2)};
  const auto field = rate_field(t, mu);
  const auto cells = cell_rates(t, mu);
  for (std::size_t i = 0; i < g.size; ++i) {
    CHECK(field[i] == cells[t.cell_of(g.x(i))]);
    CHECK(field[i] <= t.max_rate_bound() * t.max_rate_bound());
  }
  CHECK(cells[0] == doctest::Approx(std::pow(1.5 / (1.0 + mu.interpolate(-1.0)), 2)));

  BranchingSpec far;
  far.partition = {9.0};
  far.rates = {RateFunction::constant(1), RateFunction::constant(1)};
  CHECK_THROWS_AS(gamma_eval(far, mu, 0.0), ConfigError);
}

TEST_CASE("tail mass") {
  const auto g = Grid1D::symmetric(8.0, 0.01);
  CHECK(tail_mass(GridField(g), 0.0) == 0.0);
  const auto plateau = GridField::sample(g, [](double x) { return x >= 0.0 && x <= 1.0 ? 1.0 : 0.0; });
  CHECK(std::abs(tail_mass(plateau, 0.0) - 1.0) <= g.dx);
  CHECK(std::abs(tail_mass(standard_gaussian(8.0, 0.01), 0.0) - 0.5) <= 1e-6);
  CHECK_THROWS_AS(tail_mass(plateau, 9.0), DomainError);
}

TEST_CASE("one-sided gradient") {
  const auto g = Grid1D::span_of(0.0, 1.0, 0.01);
  const auto lin = GridField::sample(g, [](double x) { return x; });
  CHECK(gradient_at(lin, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gradient_at(lin, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  const auto sq = GridField::sample(g, [](double x) { return x * x; });
  CHECK(std::abs(gradient_at(sq, 1.0) - 2.0) <= 1e-10);
  CHECK_THROWS_AS(gradient_at(GridField(Grid1D::span_of(0.0, 0.1, 0.1)), 0.1), DomainError);

  // Distribution function of a polynomial density: second-order convergence of the recovered density.
  auto density = [](double x) { return 1.0 + x * x * x - x; };
  auto cdf = [](double x) { return x + 0.25 * x * x * x * x - 0.5 * x * x; };
  std::vector<double> dxs{0.1, 0.05, 0.025, 0.0125}, errs;
  for (double dx : dxs) {
    const auto u = GridField::sample(Grid1D::span_of(0.0, 1.0, dx), cdf);
    errs.push_back(std::abs(gradient_at(u, 1.0) - density(1.0)));
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < dxs.size(); ++i) {
    lx.push_back(std::log(dxs[i]));
    ly.push_back(std::log(errs[i]));
  }
  const double slope = stats::fit_line(lx, ly).slope;
  CHECK(slope >= 1.8);
  CHECK(slope <= 2.2);
}

TEST_CASE("generalized inverse") {
  const auto g = Grid1D::span_of(0.0, 0.99, 0.01);
  const auto id = GridField::sample(g, [](double x) { return x; });
  CHECK(generalized_inverse(id, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(generalized_inverse(id, 5.0) == doctest::Approx(0.99));

  const auto step = GridField::sample(g, [](double x) { return x < 0.5 - 1e-12 ? 0.0 : 1.0; });
  CHECK(generalized_inverse(step, 0.5) == doctest::Approx(0.49 + 0.01 * 0.5));
  CHECK(generalized_inverse(step, 0.5) < 0.5);

  const auto lifted = GridField::sample(g, [](double x) { return 0.2 + x; });
  CHECK(generalized_inverse(lifted, 0.1) == 0.0);

  const auto u = GridField::sample(g, [](double x) { return x * x + (x > 0.4 ? 0.1 : 0.0); });
  double prev = -1.0;
  for (double y = 0.0; y <= 1.2; y += 0.003) {
    const double v = generalized_inverse(u, y);
    CHECK(v >= prev);
    prev = v;
  }
}
