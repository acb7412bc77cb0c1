#include "sbm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sbm {
namespace {

constexpr double kClampSigmas = 4.0;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void record(DensityTrajectory& traj, double t, const std::vector<double>& mu) {
  traj.times.push_back(t);
  traj.fields.push_back(mu);
}

bool is_output_step(std::size_t step, std::size_t total, std::size_t every) {
  return step == total || (every > 0 && step % every == 0);
}

void check_finite(std::span<const double> v, std::size_t step, const char* scheme) {
  double acc = 0.0;
  for (double x : v) acc += x;
  if (std::isfinite(acc)) return;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw NumericalAbort(step, i, scheme);
  throw NumericalAbort(step, 0, scheme);
}

// Per-node noise scale sqrt(gamma * dt / dx); gamma is piecewise constant so roots are per cell.
void fill_rates(const BranchingSpec& spec, const DensityField& mu, double dt, std::vector<double>& gamma,
                std::vector<double>& scale) {
  const auto cells = cell_rates(spec, mu);
  std::vector<double> cell_scale(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) cell_scale[c] = std::sqrt(cells[c] * dt / mu.grid.dx);
  const std::size_t n = mu.grid.size;
  gamma.resize(n);
  scale.resize(n);
  std::size_t cell = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = mu.grid.x(i);
    while (cell < spec.n() && x >= spec.partition[cell]) ++cell;
    gamma[i] = cells[cell];
    scale[i] = cell_scale[cell];
  }
}

DensityField initial_field(const SimConfig& config, const Grid1D& grid, const RunOptions& opts) {
  if (!opts.initial) return config.initial.sample(grid);
  const auto& f = *opts.initial;
  if (f.grid.size != grid.size || std::abs(f.grid.origin - grid.origin) > 1e-9 * grid.dx ||
      std::abs(f.grid.dx - grid.dx) > 1e-12 * grid.dx)
    throw ConfigError("initial field does not live on the configured grid");
  for (double v : f.values)
    if (!(v >= 0.0)) throw ConfigError("initial density must be nonnegative and finite");
  return f;
}

enum class Root { exact, smoothed };

DensityTrajectory run_explicit(const SimConfig& config, std::uint64_t seed, const RunOptions& opts,
                               std::size_t block_len, Root root_kind, int m, const char* scheme) {
  const Grid1D grid = config.grid();
  const std::size_t steps = config.steps();
  const double lambda = config.dt / (2.0 * config.dx * config.dx);

  DensityField cur = initial_field(config, grid, opts);
  std::vector<double> next(grid.size, 0.0);
  const noise::WhiteNoise white(seed, kDensityStream);
  const noise::NoiseSource& source = opts.noise ? *opts.noise : static_cast<const noise::NoiseSource&>(white);

  std::unique_ptr<kernels::GmTable> gm;
  if (root_kind == Root::smoothed) {
    const double peak = *std::max_element(cur.values.begin(), cur.values.end());
    gm = std::make_unique<kernels::GmTable>(m, std::max(10.0, 4.0 * peak));
  }

  DensityTrajectory traj;
  traj.grid = grid;
  traj.seed = seed;
  record(traj, 0.0, cur.values);

  std::vector<double> gamma, scale, root(grid.size), z_buffer;
  for (std::size_t k = 0; k < steps; ++k) {
    if (k % block_len == 0) fill_rates(config.branching, cur, config.dt, gamma, scale);
    const double t = static_cast<double>(k) * config.dt;
    if (opts.observer) opts.observer->observe(k, t, cur.values, gamma);

    if (root_kind == Root::exact) {
      for (std::size_t i = 0; i < grid.size; ++i) root[i] = std::sqrt(std::max(cur.values[i], 0.0));
    } else {
      for (std::size_t i = 0; i < grid.size; ++i) root[i] = (*gm)(cur.values[i]);
    }
    traj.repairs +=
        detail::advance(cur.values, root, scale, lambda, config.positivity, source, k, next, z_buffer);
    check_finite(next, k + 1, scheme);
    std::swap(cur.values, next);

    if (is_output_step(k + 1, steps, config.output_every))
      record(traj, static_cast<double>(k + 1) * config.dt, cur.values);
  }
  if (opts.observer) {
    fill_rates(config.branching, cur, config.dt, gamma, scale);
    opts.observer->observe(steps, static_cast<double>(steps) * config.dt, cur.values, gamma);
  }
  return traj;
}

}  // namespace

const std::vector<std::string>& InitialProfile::registry() {
  static const std::vector<std::string> names{"gaussian", "plateau", "bump", "zero"};
  return names;
}

DensityField InitialProfile::sample(const Grid1D& g) const {
  DensityField f(g);
  if (name == "zero") return f;
  if (!(sigma > 0.0)) throw ConfigError("initial.sigma must be positive");
  if (!(mass >= 0.0)) throw ConfigError("initial.mass must be nonnegative");
  for (std::size_t i = 1; i + 1 < g.size; ++i) {
    const double y = (g.x(i) - center) / sigma;
    double v = 0.0;
    if (name == "gaussian") {
      v = mass * std::exp(-0.5 * y * y) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    } else if (name == "plateau") {
      v = std::abs(y) <= 1.0 + 1e-12 ? mass / (2.0 * sigma) : 0.0;
    } else if (name == "bump") {
      v = mass * kernels::mollifier(y) / sigma;
    } else {
      std::ostringstream os;
      os << "unknown initial profile '" << name << "'; registry:";
      for (const auto& r : registry()) os << ' ' << r;
      throw ConfigError(os.str());
    }
    f.values[i] = v;
  }
  return f;
}

std::size_t SimConfig::steps() const {
  if (!(dt > 0.0) || !(horizon > 0.0)) throw ConfigError("time.dt and time.horizon must be positive");
  const double r = horizon / dt;
  const double k = std::round(r);
  if (k < 1.0 || std::abs(r - k) > 1e-8 * std::max(1.0, r))
    throw ConfigError("time.horizon must be a whole number of steps");
  return static_cast<std::size_t>(k);
}


void SimConfig::validate() const {
  if (!(dx > 0.0) || !(half_width > 0.0)) throw ConfigError("grid.dx and grid.half_width must be positive");
  try {
    const Grid1D g = grid();
    if (g.size < 5) throw ConfigError("grid needs at least 5 nodes");
  } catch (const DomainError& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  const std::size_t n = steps();
  // Explicit Euler for (1/2) Laplacian is stable iff dt <= dx^2.
  if (dt > dx * dx * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "stability: dt = " << dt << " exceeds dx^2 = " << dx * dx;
    throw ConfigError(os.str());
  }
  branching.validate();
  const double margin = 4.0 * std::sqrt(horizon);
  for (double a : branching.partition) {
    if (std::abs(a) > half_width - margin + 1e-12) {
      std::ostringstream os;
      os << "branching.partition: point " << a << " is closer than 4*sqrt(T) = " << margin << " to the edge";
      throw ConfigError(os.str());
    }
  }
  if (scheme == SchemeKind::blocked) {
    if (blocks < 1) throw ConfigError("scheme.blocks must be >= 1");
    if (n % static_cast<std::size_t>(blocks) != 0) throw ConfigError("scheme.blocks must divide the step count");
  }
  (void)initial.sample(Grid1D{0.0, 1.0, 3});
}

namespace detail {

double positive_increment(double h, double s, double z, Positivity rule, bool& repaired) noexcept {
  repaired = false;
  if (rule == Positivity::clip) {
    const double inc = s * z;
    if (h + inc < 0.0) {
      repaired = true;
      return -h;
    }
    return inc;
  }
  if (!(s > 0.0) || !(h > 0.0)) return 0.0;
  if (h >= kClampSigmas * s) {
    const double zc = std::clamp(z, -kClampSigmas, kClampSigmas);
    repaired = zc != z;
    return s * zc;
  }
  // Two-point law on {-h, s^2/h}: mean 0, variance s^2, never below zero.
  repaired = true;
  const double s2 = s * s;
  const double p = s2 / (s2 + h * h);
  return normal_cdf(z) < p ? -h : s2 / h;
}

std::size_t advance(std::span<const double> mu, std::span<const double> root, std::span<const double> scale,
                    double lambda, Positivity rule, const noise::NoiseSource& noise, std::size_t step,
                    std::span<double> out, std::vector<double>& z_buffer) {
  const std::size_t n = mu.size();
  out[0] = 0.0;
  out[n - 1] = 0.0;
  std::size_t lo = n, hi = 0;
  const bool quiet = noise.silent();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h = mu[i] + lambda * (mu[i - 1] - 2.0 * mu[i] + mu[i + 1]);
    out[i] = h;
    if (quiet) continue;
    const double s = root[i] * scale[i];
    const bool active = rule == Positivity::clip ? s > 0.0 : (s > 0.0 && h > 0.0);
    if (active) {
      lo = std::min(lo, i);
      hi = i;
    }
  }
  if (lo > hi) return 0;

  z_buffer.resize(hi - lo + 1);
  noise.standard_normals(step, lo, z_buffer);
  std::size_t repairs = 0;
  for (std::size_t i = lo; i <= hi; ++i) {
    const double h = out[i];
    bool repaired = false;
    const double inc = positive_increment(h, root[i] * scale[i], z_buffer[i - lo], rule, repaired);
    repairs += repaired ? 1 : 0;
    out[i] = std::max(h + inc, 0.0);
  }
  return repairs;
}

}  // namespace detail

DensityField step_density(const DensityField& mu, std::span<const double> gamma, std::span<const double> dW,
                          double dt, Positivity rule, std::size_t* repairs) {
  const Grid1D& g = mu.grid;
  if (g.size < 3) throw DomainError("step_density: needs at least three nodes");
  if (gamma.size() != g.size || dW.size() != g.size) throw DomainError("step_density: size mismatch");
  if (!(dt > 0.0) || dt > g.dx * g.dx * (1.0 + 1e-12)) throw ConfigError("stability: dt must satisfy 0 < dt <= dx^2");

  std::vector<double> root(g.size), scale(g.size);
  for (std::size_t i = 0; i < g.size; ++i) {
    root[i] = std::sqrt(std::max(mu.values[i], 0.0));
    scale[i] = std::sqrt(std::max(gamma[i], 0.0) * dt / g.dx);
  }
  noise::NoiseGrid row{0, 0, dt, g.dx, 1, g.size, std::vector<double>(dW.begin(), dW.end())};
  const noise::GridNoise source(row);
  DensityField out(g);
  std::vector<double> buffer;
  const std::size_t r =
      detail::advance(mu.values, root, scale, dt / (2.0 * g.dx * g.dx), rule, source, 0, out.values, buffer);
  if (repairs) *repairs = r;
  check_finite(out.values, 1, "explicit-fd");
  return out;
}

DensityTrajectory simulate_density(const SimConfig& config, std::uint64_t seed, const RunOptions& opts) {
  config.validate();
  return run_explicit(config, seed, opts, 1, Root::exact, 1, "explicit-fd");
}

DensityTrajectory simulate_blocked(const SimConfig& config, int m, std::uint64_t seed, const RunOptions& opts) {
  if (m < 1) throw ConfigError("scheme.blocks must be >= 1");
  SimConfig c = config;
  c.scheme = SchemeKind::blocked;
  c.blocks = m;
  c.validate();
  const std::size_t block_len = c.steps() / static_cast<std::size_t>(m);
  return run_explicit(c, seed, opts, block_len, opts.exact_root ? Root::exact : Root::smoothed, m, "blocked");
}

MildScheme::MildScheme(const SimConfig& config) : config_(config) {
  config_.validate();
  grid_ = config_.grid();
  steps_ = config_.steps();
  const DensityField mu0 = config_.initial.sample(grid_);
  heat_.reserve(steps_ + 1);
  heat_.push_back(mu0.values);
  for (std::size_t k = 1; k <= steps_; ++k)
    heat_.push_back(kernels::semigroup_convolve(mu0, static_cast<double>(k) * config_.dt).values);

  // Sampled Gaussian step kernel whose width is tuned so the discrete variance is exactly dt;
  // sampling at sd = sqrt(dt) under-resolves the kernel once sqrt(dt) drops below dx.
  const double dx = config_.dx, target = config_.dt;
  const auto reach = static_cast<std::size_t>(std::ceil(8.0 * (std::sqrt(target) + dx) / dx));
  kernel_.resize(reach + 1);
  auto build = [&](double sd) {
    double total = 0.0, second = 0.0;
    for (std::size_t d = 0; d <= reach; ++d) {
      const double y = static_cast<double>(d) * dx / sd;
      kernel_[d] = std::exp(-0.5 * y * y);
      total += d == 0 ? kernel_[d] : 2.0 * kernel_[d];
      second += 2.0 * kernel_[d] * std::pow(static_cast<double>(d) * dx, 2);
    }
    for (double& w : kernel_) w /= total;
    return second / total;
  };
  double lo = 1e-3 * std::sqrt(target), hi = 2.0 * std::sqrt(target) + dx;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (build(mid) < target ? lo : hi) = mid;
  }
  build(0.5 * (lo + hi));
}

DensityTrajectory MildScheme::run(std::uint64_t seed, const RunOptions& opts) const {
  if (opts.initial) throw ConfigError("mild scheme: the initial density is fixed by the configuration");
  const std::size_t n = grid_.size;
  const noise::WhiteNoise white(seed, kDensityStream);
  const noise::NoiseSource& source = opts.noise ? *opts.noise : static_cast<const noise::NoiseSource&>(white);
  const bool quiet = source.silent();
  const auto reach = static_cast<std::ptrdiff_t>(kernel_.size() - 1);

  DensityTrajectory traj;
  traj.grid = grid_;
  traj.seed = seed;

  std::vector<double> nu(n, 0.0), pre(n, 0.0), z(n), gamma, scale;
  DensityField state(grid_, heat_[0]);
  record(traj, 0.0, state.values);
  for (std::size_t k = 0; k < steps_; ++k) {
    fill_rates(config_.branching, state, config_.dt, gamma, scale);
    if (opts.observer) opts.observer->observe(k, static_cast<double>(k) * config_.dt, state.values, gamma);

    pre = nu;
    if (!quiet) {
      source.standard_normals(k, 0, z);
      for (std::size_t i = 0; i < n; ++i) {
        const double h = state.values[i];
        const double s = std::sqrt(h) * scale[i];
        bool repaired = false;
        const double inc = config_.positivity == Positivity::clip
                               ? s * z[i]
                               : detail::positive_increment(h, s, z[i], config_.positivity, repaired);
        traj.repairs += repaired ? 1 : 0;
        pre[i] += inc;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<std::ptrdiff_t>(i);
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, ii - reach);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, ii + reach);
      double acc = 0.0;
      for (std::ptrdiff_t j = lo; j <= hi; ++j) acc += kernel_[static_cast<std::size_t>(std::abs(ii - j))] * pre[j];
      nu[i] = acc;
    }
    const auto& heat = heat_[k + 1];
    for (std::size_t i = 0; i < n; ++i) {
      const double v = heat[i] + nu[i];
      if (v < 0.0) ++traj.repairs;
      state.values[i] = std::max(v, 0.0);
    }
    check_finite(state.values, k + 1, "mild");
    if (is_output_step(k + 1, steps_, config_.output_every))
      record(traj, static_cast<double>(k + 1) * config_.dt, state.values);
  }
  if (opts.observer) {
    fill_rates(config_.branching, state, config_.dt, gamma, scale);
    opts.observer->observe(steps_, static_cast<double>(steps_) * config_.dt, state.values, gamma);
  }
  return traj;
}

DensityTrajectory simulate_mild(const SimConfig& config, std::uint64_t seed, const RunOptions& opts) {
  return MildScheme(config).run(seed, opts);
}

DensityTrajectory simulate(const SimConfig& config, std::uint64_t seed, const RunOptions& opts) {
  switch (config.scheme) {
    case SchemeKind::explicit_fd:
      return simulate_density(config, seed, opts);
    case SchemeKind::blocked:
      return simulate_blocked(config, config.blocks, seed, opts);
    case SchemeKind::mild:
      return simulate_mild(config, seed, opts);
  }
  throw ConfigError("unknown scheme");
}

MassPath simulate_total_mass(const RateFunction& g, double z0, double horizon, double dt, std::uint64_t seed) {
  if (!(z0 >= 0.0)) throw DomainError("simulate_total_mass: Z0 must be nonnegative");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw DomainError("simulate_total_mass: dt and T must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  MassPath path;
  path.seed = seed;
  path.times.resize(steps + 1);
  path.values.resize(steps + 1);
  std::vector<double> z(steps);
  noise::CounterNormal(seed, kMassStream).fill(0, 0, z);
  const double sdt = std::sqrt(dt);
  double v = z0;
  path.values[0] = v;
  for (std::size_t k = 0; k < steps; ++k) {
    if (v > 0.0) {
      v += g(v) * std::sqrt(v) * sdt * z[k];
      if (v <= 0.0) v = 0.0;
    }
    path.times[k + 1] = static_cast<double>(k + 1) * dt;
    path.values[k + 1] = v;
  }
  return path;
}

double terminal_mass(const RateFunction& g, double z0, double horizon, double dt, std::uint64_t seed) {
  if (!(z0 >= 0.0)) throw DomainError("terminal_mass: Z0 must be nonnegative");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw DomainError("terminal_mass: dt and T must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  const noise::CounterNormal gen(seed, kMassStream);
  const double sdt = std::sqrt(dt);
  double v = z0;
  double buf[64];
  for (std::size_t k = 0; k < steps && v > 0.0; k += 64) {
    const std::size_t len = std::min<std::size_t>(64, steps - k);
    gen.fill(0, k, std::span<double>(buf, len));
    for (std::size_t j = 0; j < len; ++j) {
      v += g(v) * std::sqrt(v) * sdt * buf[j];
      if (v <= 0.0) {
        v = 0.0;
        break;
      }
    }
  }
  return v;
}

}  // namespace sbm
