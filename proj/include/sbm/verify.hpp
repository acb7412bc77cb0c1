#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sbm/solver.hpp"
#include "sbm/test_functions.hpp"

namespace sbm::verify {

/// One pass/fail comparison. The rule string states the tolerance in words.
struct Gate {
  std::string name;
  double estimate = 0.0;
  double reference = 0.0;
  /// Standard error of the estimate, or a deterministic residual.
  double error = 0.0;
  double tolerance = 0.0;
  std::string rule;
  bool pass = false;
};

/// Self-describing result of one check. runtime_seconds is informational and is kept out of
/// serialized data files so reruns stay byte-identical.
struct VerificationReport {
  std::string check;
  std::size_t replicates = 0;
  std::vector<Gate> gates;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> table;
  double runtime_seconds = 0.0;

  bool pass() const;
  void add(Gate g) { gates.push_back(std::move(g)); }
};

enum class Direction { time, space };

struct HoelderReport {
  Direction direction = Direction::time;
  double order = 4.0;  // 2p
  std::vector<double> lags;
  std::vector<double> moments;
  double slope = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  double exponent = 0.0;
  double exponent_lo = 0.0;
  double exponent_hi = 0.0;
  std::size_t replicates = 0;
};

// ---------------------------------------------------------------------------------------------
// Replicate summaries

/// What to accumulate along each replicate.
struct SummarySpec {
  std::vector<testfn::TestFunction> phis;
  /// Weighted moment order p in E int mu^{2p} J.
  double moment_p = 1.0;
  bool duality = false;
  /// Record every this many steps (0: config.output_every, and if that is 0, only t = T).
  std::size_t record_every = 0;
};

/// Per-replicate series at the recorded times.
struct ReplicateSummary {
  std::vector<double> mass;
  /// [phi][time] pairings <mu_t, phi>, martingales M_t(phi), and compensators int <mu, gamma phi^2> ds.
  std::vector<std::vector<double>> pairing;
  std::vector<std::vector<double>> martingale;
  std::vector<std::vector<double>> compensator;
  std::vector<double> weighted_moment;
  /// [interval][time] weak-form residual of the distribution functions and its predicted compensator.
  std::vector<std::vector<double>> dual_residual;
  std::vector<std::vector<double>> dual_compensator;
  std::size_t repairs = 0;
};

struct ReplicateSet {
  std::vector<double> times;
  std::vector<std::string> phi_names;
  std::vector<ReplicateSummary> reps;
  double initial_mass = 0.0;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;
};

/// Step observer that builds a ReplicateSummary online, so no trajectory is stored.
class SummaryObserver final : public StepObserver {
 public:
  SummaryObserver(const SimConfig& config, const SummarySpec& spec);
  void observe(std::size_t step, double t, std::span<const double> mu, std::span<const double> gamma) override;
  ReplicateSummary take();
  const std::vector<double>& times() const noexcept { return times_; }

 private:
  struct Dual {
    std::size_t first, last;
    std::vector<double> phi, d2, psi2;
    double phi_b;
    std::size_t cell;
  };

  Grid1D grid_;
  std::size_t every_;
  std::size_t steps_;
  std::vector<testfn::Sampled> phis_;
  std::shared_ptr<const std::vector<double>> weight_;
  double p_;
  std::vector<Dual> duals_;

  double last_t_ = 0.0;
  bool started_ = false;
  std::vector<double> first_pair_, prev_drift_, drift_int_, comp_, prev_comp_rate_;
  std::vector<double> dual_first_, dual_prev_drift_, dual_drift_int_, dual_comp_, dual_prev_rate_;
  std::vector<double> u_buf_;
  std::vector<double> times_;
  ReplicateSummary out_;
};

/// Runs R replicates of the configured scheme with seeds independent_streams(base_seed, R),
/// `threads` workers (0: hardware concurrency); results are stored by replicate index.
ReplicateSet run_replicates(const SimConfig& config, std::uint64_t base_seed, std::size_t replicates,
                            const SummarySpec& spec, std::size_t threads = 0);

/// Same summary computed from stored trajectories (fields at every recorded time).
ReplicateSet summarize(const std::vector<DensityTrajectory>& trajs, const SimConfig& config, const SummarySpec& spec);

// ---------------------------------------------------------------------------------------------
// Checks

inline constexpr std::size_t kMinReplicates = 100;

/// E<mu_t, 1> = <mu_0, 1> at every recorded time (3 SE, floor 1e-6 * mass) and pooled lag-1
/// correlation of standardized mass increments below 4/sqrt(R). Refuses below 100 replicates.
VerificationReport check_mass_martingale(const ReplicateSet& set);

/// E[M_T(phi)^2] against E[int <mu, gamma phi^2> ds], or against `reference` if given.
/// Gate: max(10% relative, 3 SE).
VerificationReport check_qv(const ReplicateSet& set, std::size_t phi_index, const double* reference = nullptr);

/// E int mu_t^{2p} J dx at every recorded time; gate: at most 5x the t = 0 value plus 3 SE.
VerificationReport check_weighted_moments(const ReplicateSet& set);

/// Weak-form duality of the distribution functions: mean residual within 3 SE of 0 and residual
/// second moment within max(10%, 3 SE) of its compensator, per interval.
VerificationReport check_duality(const ReplicateSet& set);

/// Deterministic weak-form residual of a stored distribution trajectory at its final time, per interval.
/// Rates are the cell rates of the partition evaluated from u (used only for the compensator).
std::vector<double> duality_residual(const UTrajectory& u, const std::vector<testfn::TestFunction>& phis);

/// F(phi) = [phi(1) u'(1) - phi(0) u'(0)] - [u(1) phi'(1) - u(0) phi'(0)] with one-sided differences.
double boundary_functional(const GridField& u, const testfn::TestFunction& phi);

/// Pairings <f, h_k'> and <f, h_k''> on [0, 1] against f(0) - f(1) and f'(1) - f'(0).
/// Gates: errors nonincreasing along k_list (errors below 1e-9 count as converged) and the final
/// error at most 0.02 (1 + |limit|). Refuses if dx > 1 / (50 max k).
VerificationReport appendix_hk_limits(const testfn::EndpointFunction& f, const std::vector<int>& k_list,
                                      double dx = 0.0);

/// Monte Carlo Laplace transform and extinction frequency of terminal masses against the
/// Feller closed forms exp(-lambda Z0 / (1 + gamma lambda t / 2)) and exp(-2 Z0 / (gamma t)).
/// Refuses for a non-constant rate or fewer than 10^4 paths.
VerificationReport feller_compare(const std::vector<double>& terminal, const RateFunction& g, double z0, double t,
                                  const std::vector<double>& lambdas);

/// Two u-system runs sharing noise, initial data apart by eps in sup norm (every u^i scaled by
/// 1 + eps / max u). Runs with the clip positivity rule whatever the config says. Gates: eps = 0 gives
/// identical runs; distances nondecreasing in eps; distance at the smallest positive eps at most 10 eps.
VerificationReport pathwise_stability(const SimConfig& config, std::uint64_t seed, const std::vector<double>& eps);

/// Implied Hölder exponent from per-replicate lag moments: log-log regression of the replicate
/// mean of |increment|^order on lag, bootstrap percentile CI over replicates.
HoelderReport fit_hoelder(Direction dir, double order, const std::vector<double>& lags,
                          const std::vector<std::vector<double>>& moments, std::uint64_t boot_seed,
                          std::size_t resamples = 400);

/// Windows for increment moments of density fields.
struct HoelderWindow {
  double x_lo = -0.5;
  double x_hi = 0.5;
  /// Only times at or after this fraction of the horizon enter.
  double t_from = 0.5;
  /// Lags in steps (time direction) or nodes (space direction); must be dyadic.
  std::vector<std::size_t> lags{1, 2, 4, 8, 16, 32};
};

/// Online accumulator of lag moments for one replicate.
class HoelderObserver final : public StepObserver {
 public:
  HoelderObserver(const SimConfig& config, Direction dir, double order, HoelderWindow window);
  /// For a sequence of steps + 1 fields spaced dt apart on `grid`.
  HoelderObserver(const Grid1D& grid, std::size_t steps, double dt, Direction dir, double order,
                  HoelderWindow window);
  void observe(std::size_t step, double t, std::span<const double> mu, std::span<const double> gamma) override;
  /// Mean |increment|^order per lag.
  std::vector<double> moments() const;
  /// Lags in physical units.
  std::vector<double> lags() const;

 private:
  Grid1D grid_;
  double dt_;
  Direction dir_;
  double order_;
  HoelderWindow win_;
  std::size_t first_, last_, start_step_;
  std::vector<std::vector<double>> ring_;
  std::vector<double> sums_;
  std::vector<std::size_t> counts_;
};

/// estimate_hoelder on stored trajectories. Refuses with fewer than 4 usable lags.
HoelderReport estimate_hoelder(const std::vector<DensityTrajectory>& trajs, Direction dir, double p,
                               const HoelderWindow& window, std::uint64_t boot_seed = 1);

/// Same estimate driven online over fresh replicates of `config`.
HoelderReport estimate_hoelder_online(const SimConfig& config, std::uint64_t base_seed, std::size_t replicates,
                                      Direction dir, double p, const HoelderWindow& window, std::size_t threads = 0);

/// Estimator control: sampled Brownian paths on [0, T] with step dt.
HoelderReport brownian_control(std::uint64_t seed, std::size_t paths, std::size_t steps, double dt, double p,
                               const std::vector<std::size_t>& lags);

/// Zero-noise refinement of the weak-form residual of distribution functions derived from density
/// runs, dt = dx^2 / 2. Gate: fitted order in dx at least 1.8.
VerificationReport duality_refinement(const SimConfig& base, const std::vector<double>& dxs);

/// Zero-noise refinement of the explicit scheme against the heat semigroup, dt = dx^2 / 2.
/// Gate: fitted order of the sup error in [1.8, 2.2].
VerificationReport heat_refinement(const SimConfig& base, const std::vector<double>& dxs);

/// Shared-noise comparison of the blocked scheme with the explicit scheme over block counts `ms`,
/// averaged over replicates. Gates: mean sup-t L2 distance nonincreasing in m; the exact-root
/// scheme with one block per step reproduces the explicit scheme bit for bit.
VerificationReport blocked_study(const SimConfig& config, const std::vector<int>& ms, std::uint64_t base_seed,
                                 std::size_t replicates);

/// Two-sample KS comparison of u^n(L) at T from the distribution-function system against the
/// total-mass diffusion (n = 0). Gate: p >= 0.01.
VerificationReport u_mass_consistency(const SimConfig& config, std::uint64_t base_seed, std::size_t paths,
                                      double mass_dt, std::size_t threads = 0);

/// Sup over stored times of the grid L2 distance between two trajectories with equal grids and times.
double sup_l2_distance(const DensityTrajectory& a, const DensityTrajectory& b);

}  // namespace sbm::verify
