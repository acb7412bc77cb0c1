#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sbm/branching.hpp"
#include "sbm/common.hpp"
#include "sbm/kernels.hpp"
#include "sbm/noise.hpp"

namespace sbm {

/// How a step keeps the density nonnegative.
///
/// moment_matched: Gaussian increment s*Z where the post-diffusion value h is at least 4s
/// (Z clamped to [-4, 4]); otherwise a two-point increment in {-h, s^2/h} with the same mean
/// and variance, driven by the same Z through its normal cdf. Never produces negative values.
/// clip: Gaussian increment, then max(., 0). Biased upward near zero; kept for comparison.
enum class Positivity { moment_matched, clip };

enum class SchemeKind { explicit_fd, blocked, mild };

/// Named initial density profile scaled to a given total mass.
///   gaussian  N(center, sigma^2)
///   plateau   flat on [center - sigma, center + sigma]
///   bump      smooth compact bump on the same interval
///   zero      identically 0
struct InitialProfile {
  std::string name = "gaussian";
  double mass = 1.0;
  double center = 0.0;
  double sigma = 0.5;

  DensityField sample(const Grid1D& g) const;
  static const std::vector<std::string>& registry();
};

struct SimConfig {
  double half_width = 5.0;
  double dx = 0.02;
  double dt = 2e-4;
  double horizon = 1.0;
  /// Steps between stored fields; 0 keeps only the first and last.
  std::size_t output_every = 0;
  InitialProfile initial;
  BranchingSpec branching = BranchingSpec::constant_rate(1.0);
  SchemeKind scheme = SchemeKind::explicit_fd;
  int blocks = 1;
  Positivity positivity = Positivity::moment_matched;

  Grid1D grid() const { return Grid1D::symmetric(half_width, dx); }
  std::size_t steps() const;
  /// Throws ConfigError: stability dt <= dx^2, grid sizes, partition margin 4*sqrt(T), block alignment.
  void validate() const;
};

/// Fields of one run at the stored times. Every stored field is nonnegative.
struct DensityTrajectory {
  Grid1D grid;
  std::vector<double> times;
  std::vector<std::vector<double>> fields;
  std::uint64_t seed = 0;
  std::size_t repairs = 0;

  DensityField field(std::size_t k) const { return DensityField(grid, fields[k]); }
};

/// Per-step hook. observe() is called for k = 0..steps with the state at t_k and the rate
/// field used for the increment out of t_k (at the final step: the rate of the final state).
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void observe(std::size_t step, double t, std::span<const double> mu, std::span<const double> gamma) = 0;
};

/// Single explicit step. dW holds white-noise increments N(0, dt*dx) per node; gamma is the rate field.
/// Boundary nodes carry the zero-Dirichlet condition.
DensityField step_density(const DensityField& mu, std::span<const double> gamma, std::span<const double> dW,
                          double dt, Positivity rule = Positivity::moment_matched, std::size_t* repairs = nullptr);

namespace detail {

/// Core explicit update. Noise std at node i is root[i] * scale[i]; z holds standard normals for
/// nodes [z_first, z_first + z.size()) and zero elsewhere. Returns the number of positivity repairs.
std::size_t advance(std::span<const double> mu, std::span<const double> root, std::span<const double> scale,
                    double lambda, Positivity rule, const noise::NoiseSource& noise, std::size_t step,
                    std::span<double> out, std::vector<double>& z_buffer);

/// Increment with std s applied to post-diffusion value h under the given rule.
double positive_increment(double h, double s, double z, Positivity rule, bool& repaired) noexcept;

}  // namespace detail

struct RunOptions {
  /// Replaces the seeded white noise (shared-noise studies, impulse tests). Not owned.
  const noise::NoiseSource* noise = nullptr;
  StepObserver* observer = nullptr;
  /// Blocked scheme only: use sqrt instead of G_m (the degenerate limit of the construction).
  bool exact_root = false;
  /// Override the sampled initial density.
  const DensityField* initial = nullptr;
};

/// Explicit finite-difference scheme with the rate refreshed every step.
DensityTrajectory simulate_density(const SimConfig& config, std::uint64_t seed, const RunOptions& opts = {});

/// Time-blocked approximation: the rate is frozen at each block start t_{k-1} = (k-1)T/m and the
/// square root is replaced by G_m. Shares the stepping code with simulate_density.
DensityTrajectory simulate_blocked(const SimConfig& config, int m, std::uint64_t seed, const RunOptions& opts = {});

/// Mild-form scheme: heat flow of the initial density plus a stochastic convolution advanced by a
/// normalized discrete Gaussian kernel. Reusable across replicates of one configuration.
class MildScheme {
 public:
  explicit MildScheme(const SimConfig& config);
  DensityTrajectory run(std::uint64_t seed, const RunOptions& opts = {}) const;
  const std::vector<double>& deterministic(std::size_t step) const { return heat_[step]; }

 private:
  SimConfig config_;
  Grid1D grid_;
  std::size_t steps_;
  std::vector<std::vector<double>> heat_;
  std::vector<double> kernel_;
};

DensityTrajectory simulate_mild(const SimConfig& config, std::uint64_t seed, const RunOptions& opts = {});

/// Dispatch on config.scheme.
DensityTrajectory simulate(const SimConfig& config, std::uint64_t seed, const RunOptions& opts = {});

/// Distribution functions u^i(x) = mass of (a_i, x] on each interval of the partition.
/// Interval 0 starts at -L and interval n ends at +L; u^n(L) stands in for u^n(infinity).
struct DistributionSystemState {
  std::vector<GridField> u;
  /// slopes[i] = one-sided gradient of u^i at a_{i+1}, i < n.
  std::vector<double> slopes;
  double tail = 0.0;

  std::size_t intervals() const noexcept { return u.size(); }
  /// max_i |grad u^{i-1}(a_i) - grad u^i(a_i)|, i = 1..n.
  double slope_mismatch() const;
  double total_mass() const;
};

struct UTrajectory {
  std::vector<double> times;
  std::vector<DistributionSystemState> states;
  std::uint64_t seed = 0;
  std::size_t repairs = 0;
};

/// Node index ranges [first, last] of each partition interval on the density grid.
/// Partition points must lie on grid nodes.
std::vector<std::pair<std::size_t, std::size_t>> interval_nodes(const Grid1D& grid, const BranchingSpec& spec);

DistributionSystemState distribution_state(const DensityField& mu, const BranchingSpec& spec);

UTrajectory derive_u_from_density(const DensityTrajectory& traj, const BranchingSpec& spec);

struct UOptions {
  /// Replaces the state built from the configured initial density.
  const DistributionSystemState* initial = nullptr;
};

/// Coupled distribution-function system driven by independent white noises W_0..W_n in (t, z).
/// The noise at node x of interval i is g_i(theta_i) * W_i([t, t+dt] x [0, u^i(x)]). Since u^i is
/// nondecreasing in x, W_i is sampled through its independent increments over the level bands
/// [u^i(x_{j-1}), u^i(x_j)], with variance dt times the band width. Each step diffuses first; the band
/// increments then go through the positivity rule, which keeps u^i nondecreasing and lets it reach 0.
/// repairs counts diffused cell masses that came out negative and were reset to 0.
UTrajectory simulate_u_system(const SimConfig& config, std::uint64_t seed, const UOptions& opts = {});

/// Total mass Z for a rate depending on total mass only: dZ = g(Z) sqrt(Z) dB,
/// Euler-Maruyama with absorption at 0.
struct MassPath {
  std::vector<double> times;
  std::vector<double> values;
  std::uint64_t seed = 0;
};

MassPath simulate_total_mass(const RateFunction& g, double z0, double horizon, double dt, std::uint64_t seed);
/// Terminal value only; same arithmetic as simulate_total_mass.
double terminal_mass(const RateFunction& g, double z0, double horizon, double dt, std::uint64_t seed);

/// Stream identifiers of the counter-based generator.
inline constexpr std::uint32_t kDensityStream = 0;
inline constexpr std::uint32_t kMassStream = 0x4D415353u;
inline std::uint32_t u_stream(std::size_t interval) { return static_cast<std::uint32_t>(interval + 1); }

}  // namespace sbm
