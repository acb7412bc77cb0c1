#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sbm/common.hpp"

namespace sbm::noise {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
Counter philox4x32(Counter ctr, Key key) noexcept;

/// Standard normal variates addressed by (step, cell) for a fixed (seed, stream).
/// Cells 2j and 2j+1 share one Philox block and one Box-Muller transform.
class CounterNormal {
 public:
  CounterNormal(std::uint64_t seed, std::uint32_t stream) noexcept;

  std::pair<double, double> pair(std::uint64_t step, std::uint64_t pair_index) const noexcept;
  double normal(std::uint64_t step, std::uint64_t cell) const noexcept;
  /// out[k] = normal(step, first + k).
  void fill(std::uint64_t step, std::uint64_t first, std::span<double> out) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream() const noexcept { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
  Key key_;
};

/// Materialized space-time white noise increments, each N(0, dt*dx), stored row-major [nt][nx].
struct NoiseGrid {
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
  double dt = 0.0;
  double dx = 0.0;
  std::size_t nt = 0;
  std::size_t nx = 0;
  std::vector<double> increments;

  double at(std::size_t t, std::size_t x) const noexcept { return increments[t * nx + x]; }
  double& at(std::size_t t, std::size_t x) noexcept { return increments[t * nx + x]; }
  std::span<const double> row(std::size_t t) const noexcept {
    return std::span<const double>(increments).subspan(t * nx, nx);
  }
};

/// Deterministic in every argument; cell (t, x) equals sqrt(dt*dx) * CounterNormal(seed, stream).normal(t, x).
NoiseGrid sample_noise(std::uint64_t seed, double dt, double dx, std::size_t nt, std::size_t nx,
                       std::uint32_t stream = 0);

/// Sums factor_t x factor_x blocks of fine cells, rows outer and columns inner.
NoiseGrid coarsen(const NoiseGrid& noise, std::size_t factor_t, std::size_t factor_x);

/// Derived seeds for independent streams; a pure function of (base_seed, index).
std::vector<std::uint64_t> independent_streams(std::uint64_t base_seed, std::size_t count);

/// Source of standard normal rows for the schemes, addressed by (step, node).
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  /// out[k] = standard normal for (step, first + k).
  virtual void standard_normals(std::size_t step, std::size_t first, std::span<double> out) const = 0;
  /// True if every variate is zero; lets schemes skip the stochastic term.
  virtual bool silent() const noexcept { return false; }
};

class WhiteNoise final : public NoiseSource {
 public:
  WhiteNoise(std::uint64_t seed, std::uint32_t stream = 0) noexcept : gen_(seed, stream) {}
  void standard_normals(std::size_t step, std::size_t first, std::span<double> out) const override;
  const CounterNormal& generator() const noexcept { return gen_; }

 private:
  CounterNormal gen_;
};

class ZeroNoise final : public NoiseSource {
 public:
  void standard_normals(std::size_t, std::size_t, std::span<double> out) const override;
  bool silent() const noexcept override { return true; }
};

/// Replays a NoiseGrid (standardized by sqrt(dt*dx)); zero outside its extent.
class GridNoise final : public NoiseSource {
 public:
  explicit GridNoise(const NoiseGrid& grid) noexcept : grid_(&grid) {}
  void standard_normals(std::size_t step, std::size_t first, std::span<double> out) const override;

 private:
  const NoiseGrid* grid_;
};

}  // namespace sbm::noise
