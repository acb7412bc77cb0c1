#include "sbm/noise.hpp"

#include <algorithm>
#include <numbers>

namespace sbm::noise {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

// Stream-seed derivation uses a reserved counter word so it never collides with variate draws.
constexpr std::uint32_t kSeedDomain = 0x5EEDC0DEu;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform on (0, 1): never exactly 0, so log() is safe.
inline double to_open_unit(std::uint32_t lo, std::uint32_t hi) noexcept {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

[[gnu::always_inline]] inline Counter philox_rounds(Counter c, Key k) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

// Box-Muller on one Philox block. The angle is split into a quarter turn and a remainder in
// [-pi/4, pi/4] so sincos never needs argument reduction.
[[gnu::always_inline]] inline std::pair<double, double> box_muller(const Counter& r) noexcept {
  const double u1 = to_open_unit(r[0], r[1]);
  const double u2 = to_open_unit(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double q = std::nearbyint(4.0 * u2);
  const double theta = 2.0 * std::numbers::pi * (u2 - 0.25 * q);
  const double s = std::sin(theta), c = std::cos(theta);
  switch (static_cast<int>(q) & 3) {
    case 0: return {radius * c, radius * s};
    case 1: return {-radius * s, radius * c};
    case 2: return {-radius * c, -radius * s};
    default: return {radius * s, -radius * c};
  }
}

}  // namespace

Counter philox4x32(Counter c, Key k) noexcept { return philox_rounds(c, k); }

CounterNormal::CounterNormal(std::uint64_t seed, std::uint32_t stream) noexcept
    : seed_(seed),
      stream_(stream),
      key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

std::pair<double, double> CounterNormal::pair(std::uint64_t step, std::uint64_t pair_index) const noexcept {
  const Counter ctr{static_cast<std::uint32_t>(pair_index), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(step >> 32) ^ (static_cast<std::uint32_t>(pair_index >> 32) << 16),
                    stream_};
  return box_muller(philox_rounds(ctr, key_));
}

double CounterNormal::normal(std::uint64_t step, std::uint64_t cell) const noexcept {
  const auto p = pair(step, cell >> 1);
  return (cell & 1u) ? p.second : p.first;
}

void CounterNormal::fill(std::uint64_t step, std::uint64_t first, std::span<double> out) const noexcept {
  std::size_t k = 0;
  const std::size_t n = out.size();
  if (n == 0) return;
  if (first & 1u) {
    out[k++] = pair(step, first >> 1).second;
  }
  for (; k + 1 < n; k += 2) {
    const auto p = pair(step, (first + k) >> 1);
    out[k] = p.first;
    out[k + 1] = p.second;
  }
  if (k < n) out[k] = pair(step, (first + k) >> 1).first;
}

NoiseGrid sample_noise(std::uint64_t seed, double dt, double dx, std::size_t nt, std::size_t nx,
                       std::uint32_t stream) {
  if (!(dt > 0.0) || !(dx > 0.0)) throw DomainError("sample_noise: dt and dx must be positive");
  if (nt == 0 || nx == 0) throw DomainError("sample_noise: nt and nx must be >= 1");
  NoiseGrid g{seed, stream, dt, dx, nt, nx, std::vector<double>(nt * nx)};
  const CounterNormal gen(seed, stream);
  const double scale = std::sqrt(dt * dx);
  for (std::size_t t = 0; t < nt; ++t) {
    std::span<double> row(g.increments.data() + t * nx, nx);
    gen.fill(t, 0, row);
    for (double& v : row) v *= scale;
  }
  return g;
}

NoiseGrid coarsen(const NoiseGrid& noise, std::size_t factor_t, std::size_t factor_x) {
  if (factor_t == 0 || factor_x == 0) throw DomainError("coarsen: factors must be >= 1");
  if (noise.nt % factor_t != 0 || noise.nx % factor_x != 0)
    throw DomainError("coarsen: factors must divide the grid extents");
  NoiseGrid out{noise.seed,
                noise.stream,
                noise.dt * static_cast<double>(factor_t),
                noise.dx * static_cast<double>(factor_x),
                noise.nt / factor_t,
                noise.nx / factor_x,
                {}};
  out.increments.assign(out.nt * out.nx, 0.0);
  for (std::size_t T = 0; T < out.nt; ++T) {
    for (std::size_t X = 0; X < out.nx; ++X) {
      double s = 0.0;
      for (std::size_t a = 0; a < factor_t; ++a)
        for (std::size_t b = 0; b < factor_x; ++b) s += noise.at(T * factor_t + a, X * factor_x + b);
      out.at(T, X) = s;
    }
  }
  return out;
}

std::vector<std::uint64_t> independent_streams(std::uint64_t base_seed, std::size_t count) {
  if (count == 0) throw DomainError("independent_streams: count must be >= 1");
  const Key key{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32)};
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Counter r = philox4x32(
        {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32), 0u,
         kSeedDomain},
        key);
    seeds[i] = (static_cast<std::uint64_t>(r[1]) << 32) | r[0];
  }
  return seeds;
}

void WhiteNoise::standard_normals(std::size_t step, std::size_t first, std::span<double> out) const {
  gen_.fill(step, first, out);
}

void ZeroNoise::standard_normals(std::size_t, std::size_t, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
}

void GridNoise::standard_normals(std::size_t step, std::size_t first, std::span<double> out) const {
  const double inv = 1.0 / std::sqrt(grid_->dt * grid_->dx);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t x = first + k;
    out[k] = (step < grid_->nt && x < grid_->nx) ? grid_->at(step, x) * inv : 0.0;
  }
}

}  // namespace sbm::noise
