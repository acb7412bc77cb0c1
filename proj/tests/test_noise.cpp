#include <doctest.h>

#include <cmath>
#include <cstring>

#include "sbm/noise.hpp"
#include "sbm/stats.hpp"

using namespace sbm;
using namespace sbm::noise;

TEST_CASE("Philox4x32-10 known answers") {
  // Reference vectors of the Random123 distribution.
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("sampled increments: moments, law and determinism") {
  const double dt = 1e-3, dx = 0.02;
  const auto a = sample_noise(7, dt, dx, 1000, 1000);
  const auto st = stats::mean_se(a.increments);
  CHECK(std::abs(st.mean) <= 4.0 * std::sqrt(dt * dx / 1e6));
  CHECK(std::abs(st.sd * st.sd / (dt * dx) - 1.0) <= 0.01);

  const auto b = sample_noise(7, dt, dx, 1000, 1000);
  REQUIRE(a.increments.size() == b.increments.size());
  CHECK(std::memcmp(a.increments.data(), b.increments.data(), a.increments.size() * sizeof(double)) == 0);

  std::vector<double> z(a.increments.begin(), a.increments.begin() + 100000);
  for (double& v : z) v /= std::sqrt(dt * dx);
  CHECK(stats::ks_normal(z).p_value >= 0.01);

  CHECK_THROWS_AS(sample_noise(1, 0.0, dx, 2, 2), DomainError);
  CHECK_THROWS_AS(sample_noise(1, dt, -1.0, 2, 2), DomainError);
}

TEST_CASE("random access matches sequential fill") {
  const CounterNormal g(99, 3);
  std::vector<double> row(37);
  g.fill(12, 5, row);
  for (std::size_t k = 0; k < row.size(); ++k) CHECK(row[k] == g.normal(12, 5 + k));
  const auto [z0, z1] = g.pair(4, 10);
  CHECK(z0 == g.normal(4, 20));
  CHECK(z1 == g.normal(4, 21));
  CHECK(g.normal(4, 20) != CounterNormal(99, 4).normal(4, 20));
  CHECK(g.normal(4, 20) != CounterNormal(98, 3).normal(4, 20));
}

TEST_CASE("coarsening") {
  const double dt = 1e-3, dx = 0.01;
  const auto fine = sample_noise(3, dt, dx, 640, 640);
  const auto same = coarsen(fine, 1, 1);
  CHECK(std::memcmp(same.increments.data(), fine.increments.data(), fine.increments.size() * sizeof(double)) == 0);

  const auto c = coarsen(fine, 2, 2);
  REQUIRE(c.nt == 320);
  REQUIRE(c.nx == 320);
  CHECK(c.dt == 2 * dt);
  CHECK(c.dx == 2 * dx);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t x = 0; x < 5; ++x) {
      double s = 0.0;
      s += fine.at(2 * t, 2 * x);
      s += fine.at(2 * t, 2 * x + 1);
      s += fine.at(2 * t + 1, 2 * x);
      s += fine.at(2 * t + 1, 2 * x + 1);
      CHECK(c.at(t, x) == s);
    }
  const auto st = stats::mean_se(c.increments);
  CHECK(c.increments.size() >= 100000);
  CHECK(std::abs(st.sd * st.sd / (4 * dt * dx) - 1.0) <= 0.02);

  // Coarsened fine noise and directly sampled coarse noise agree in their first two moments.
  const auto direct = sample_noise(4, 2 * dt, 2 * dx, 320, 320);
  const auto sd = stats::mean_se(direct.increments);
  CHECK(std::abs(st.mean - sd.mean) <= 4.0 * std::hypot(st.se, sd.se));
  CHECK(std::abs(st.sd / sd.sd - 1.0) <= 0.02);

  CHECK_THROWS_AS(coarsen(fine, 3, 1), DomainError);
  CHECK_THROWS_AS(coarsen(fine, 0, 1), DomainError);
}

TEST_CASE("independent streams") {
  const auto one = independent_streams(2024, 1);
  REQUIRE(one.size() == 1);
  CHECK(one == independent_streams(2024, 1));
  const auto many = independent_streams(2024, 16);
  CHECK(many.front() == one.front());
  CHECK(many == independent_streams(2024, 16));
  CHECK(many != independent_streams(2025, 16));

  const std::size_t N = 100000;
  std::vector<double> a(N), b(N);
  CounterNormal(many[0], 0).fill(0, 0, a);
  CounterNormal(many[1], 0).fill(0, 0, b);
  CHECK(std::abs(stats::pearson(a, b)) < 4.0 / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("noise sources") {
  const auto grid = sample_noise(5, 1e-3, 0.1, 4, 6);
  const GridNoise replay(grid);
  std::vector<double> out(8);
  replay.standard_normals(2, 3, out);
  for (std::size_t k = 0; k < 3; ++k) CHECK(out[k] == doctest::Approx(grid.at(2, 3 + k) / std::sqrt(1e-4)));
  for (std::size_t k = 3; k < 8; ++k) CHECK(out[k] == 0.0);
  ZeroNoise zero;
  zero.standard_normals(0, 0, out);
  for (double v : out) CHECK(v == 0.0);
  CHECK(zero.silent());
}
