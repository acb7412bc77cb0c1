#include <algorithm>
#include <cmath>
#include <sstream>

#include "sbm/solver.hpp"

namespace sbm {
namespace {

double backward_gradient(std::span<const double> v, double dx) {
  const std::size_t n = v.size();
  return (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
}

double forward_gradient(std::span<const double> v, double dx) {
  return (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
}

void check_state_shape(const DistributionSystemState& s, const std::vector<std::pair<std::size_t, std::size_t>>& r) {
  if (s.u.size() != r.size()) throw ConfigError("initial u-state has the wrong number of intervals");
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (s.u[i].size() != r[i].second - r[i].first + 1)
      throw ConfigError("initial u-state interval size does not match the grid");
    if (s.u[i].values.front() != 0.0) throw ConfigError("initial u-state must vanish at the left end of each interval");
  }
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> interval_nodes(const Grid1D& grid, const BranchingSpec& spec) {
  std::vector<std::size_t> cuts{0};
  for (double a : spec.partition) {
    const auto node = grid.node_at(a);
    if (!node) {
      std::ostringstream os;
      os << "branching.partition: point " << a << " is not a grid node";
      throw ConfigError(os.str());
    }
    cuts.push_back(*node);
  }
  cuts.push_back(grid.size - 1);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] < cuts[i] + 2) throw ConfigError("branching.partition: each interval needs at least 3 grid nodes");
    out.emplace_back(cuts[i], cuts[i + 1]);
  }
  return out;
}

double DistributionSystemState::slope_mismatch() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < u.size(); ++i) {
    const double right = forward_gradient(u[i].values, u[i].grid.dx);
    worst = std::max(worst, std::abs(slopes[i - 1] - right));
  }
  return worst;
}

double DistributionSystemState::total_mass() const {
  double s = 0.0;
  for (const auto& f : u) s += f.values.back();
  return s;
}

DistributionSystemState distribution_state(const DensityField& mu, const BranchingSpec& spec) {
  const auto ranges = interval_nodes(mu.grid, spec);
  DistributionSystemState s;
  for (const auto& [first, last] : ranges) {
    const Grid1D g{mu.grid.x(first), mu.grid.dx, last - first + 1};
    s.u.emplace_back(g, cumulative_trapezoid(std::span<const double>(mu.values).subspan(first, g.size), g.dx));
  }
  for (std::size_t i = 0; i + 1 < s.u.size(); ++i) s.slopes.push_back(backward_gradient(s.u[i].values, mu.grid.dx));
  s.tail = s.u.back().values.back();
  return s;
}

UTrajectory derive_u_from_density(const DensityTrajectory& traj, const BranchingSpec& spec) {
  UTrajectory out;
  out.times = traj.times;
  out.seed = traj.seed;
  for (std::size_t k = 0; k < traj.fields.size(); ++k) out.states.push_back(distribution_state(traj.field(k), spec));
  return out;
}

UTrajectory simulate_u_system(const SimConfig& config, std::uint64_t seed, const UOptions& opts) {
  config.validate();
  const Grid1D grid = config.grid();
  const auto ranges = interval_nodes(grid, config.branching);
  const std::size_t n_int = ranges.size();
  const std::size_t last = n_int - 1;
  const std::size_t steps = config.steps();
  const double dx = config.dx;
  const double dt = config.dt;
  const double half_lap = 0.5 * dt / (dx * dx);

  DistributionSystemState state =
      opts.initial ? *opts.initial : distribution_state(config.initial.sample(grid), config.branching);
  check_state_shape(state, ranges);

  std::vector<noise::CounterNormal> gens;
  for (std::size_t i = 0; i < n_int; ++i) gens.emplace_back(seed, u_stream(i));
  std::vector<double> z, heat;

  UTrajectory traj;
  traj.seed = seed;
  auto snapshot = [&](double t) {
    for (std::size_t i = 0; i + 1 < n_int; ++i) state.slopes[i] = backward_gradient(state.u[i].values, dx);
    state.slopes.resize(n_int - 1);
    state.tail = state.u[last].values.back();
    traj.times.push_back(t);
    traj.states.push_back(state);
  };
  state.slopes.resize(n_int - 1);
  snapshot(0.0);

  std::vector<std::vector<double>> next(n_int);
  std::vector<double> coef(n_int);
  for (std::size_t k = 0; k < steps; ++k) {
    // Boundary data from the state at t_k.
    for (std::size_t i = 0; i < n_int; ++i) {
      const auto& v = state.u[i].values;
      const double theta = i < last ? backward_gradient(v, dx) : v.back();
      coef[i] = config.branching.rates[i](std::max(theta, 0.0));
    }
    for (std::size_t i = 0; i < n_int; ++i) {
      const auto& v = state.u[i].values;
      const std::size_t n = v.size();
      heat.assign(n, 0.0);
      for (std::size_t j = 1; j < n; ++j) {
        double ghost;
        if (j + 1 < n) {
          ghost = v[j + 1];
        } else if (i < last) {
          ghost = v[j] + state.u[i + 1].values[1];  // mass up to a_{i+1} + dx
        } else {
          ghost = v[j - 1];  // zero flux at the right edge
        }
        heat[j] = v[j] + half_lap * (v[j - 1] - 2.0 * v[j] + ghost);
      }
      // W_i([t, t+dt] x [u(x_{j-1}), u(x_j)]) has variance dt times the cell mass. The increment goes
      // through the same positivity rule as the density scheme, so u stays nondecreasing.
      z.resize(n);
      gens[i].fill(k, 0, z);
      auto& w = next[i];
      w.assign(n, 0.0);
      double run = 0.0;
      for (std::size_t j = 1; j < n; ++j) {
        double h = heat[j] - heat[j - 1];
        if (h < 0.0) {
          ++traj.repairs;
          h = 0.0;
        }
        // Split step: diffusion first, then branching on the diffused cell mass.
        const double s = coef[i] * std::sqrt(dt * h);
        bool repaired = false;
        run += std::max(h + detail::positive_increment(h, s, z[j], config.positivity, repaired), 0.0);
        if (!std::isfinite(run)) throw NumericalAbort(k + 1, ranges[i].first + j, "u-system");
        w[j] = run;
      }
    }
    for (std::size_t i = 0; i < n_int; ++i) std::swap(state.u[i].values, next[i]);
    if (k + 1 == steps || (config.output_every > 0 && (k + 1) % config.output_every == 0))
      snapshot(static_cast<double>(k + 1) * dt);
  }
  return traj;
}

}  // namespace sbm
