#include "sbm/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "sbm/kernels.hpp"
#include "sbm/stats.hpp"

namespace sbm::verify {
namespace {

std::size_t resolve_threads(std::size_t threads, std::size_t work) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(threads, work));
}

// Runs fn(i) for i in [0, n). Each result goes to its own slot, so the merge order is fixed.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = resolve_threads(threads, n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double power(double v, double order) {
  v = std::abs(v);
  if (order == 4.0) {
    const double v2 = v * v;
    return v2 * v2;
  }
  if (order == 2.0) return v * v;
  return std::pow(v, order);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Gate within(std::string name, double estimate, double reference, double error, double tolerance, std::string rule) {
  Gate g;
  g.name = std::move(name);
  g.estimate = estimate;
  g.reference = reference;
  g.error = error;
  g.tolerance = tolerance;
  g.rule = std::move(rule);
  g.pass = std::abs(estimate - reference) <= tolerance;
  return g;
}

std::vector<double> column(const ReplicateSet& set, std::size_t j, auto&& pick) {
  std::vector<double> v;
  v.reserve(set.reps.size());
  for (const auto& r : set.reps) v.push_back(pick(r)[j]);
  return v;
}

void require_replicates(const ReplicateSet& set, std::size_t need, const char* check) {
  if (set.reps.size() < need) {
    std::ostringstream os;
    os << check << ": needs at least " << need << " replicates, got " << set.reps.size();
    throw Refusal(os.str());
  }
}

double order_fit(const std::vector<double>& h, const std::vector<double>& err) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < h.size(); ++i) {
    lx.push_back(std::log(h[i]));
    ly.push_back(std::log(std::max(err[i], 1e-300)));
  }
  return stats::fit_line(lx, ly).slope;
}

// The weight J is expensive (one quadrature per node) and identical across replicates.
std::shared_ptr<const std::vector<double>> weights_for(const Grid1D& g) {
  static std::mutex mu;
  static std::vector<std::pair<Grid1D, std::shared_ptr<const std::vector<double>>>> cache;
  std::lock_guard lock(mu);
  for (const auto& [grid, w] : cache)
    if (grid.origin == g.origin && grid.dx == g.dx && grid.size == g.size) return w;
  auto w = std::make_shared<std::vector<double>>(g.size);
  for (std::size_t i = 0; i < g.size; ++i) (*w)[i] = kernels::weight_j(g.x(i));
  if (cache.size() > 16) cache.erase(cache.begin());
  cache.emplace_back(g, w);
  return w;
}

}  // namespace

bool VerificationReport::pass() const {
  return std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.pass; });
}

// ---------------------------------------------------------------------------------------------

SummaryObserver::SummaryObserver(const SimConfig& config, const SummarySpec& spec)
    : grid_(config.grid()), steps_(config.steps()), p_(spec.moment_p) {
  every_ = spec.record_every ? spec.record_every : (config.output_every ? config.output_every : steps_);
  for (const auto& phi : spec.phis) phis_.push_back(testfn::sample(phi, grid_));
  weight_ = weights_for(grid_);
  if (spec.duality) {
    const auto ranges = interval_nodes(grid_, config.branching);
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      const auto [first, last] = ranges[i];
      const double a = grid_.x(first), b = grid_.x(last);
      const bool is_last = i + 1 == ranges.size();
      const auto phi = testfn::dual_function(a, b, is_last);
      testfn::check_dual_constraints(phi, a, b, is_last);
      Dual d{first, last, {}, {}, {}, phi.f(b), i};
      for (std::size_t j = first; j <= last; ++j) {
        d.phi.push_back(phi.f(grid_.x(j)));
        d.d2.push_back(phi.d2(grid_.x(j)));
      }
      // Psi(y) = int_y^b phi, by reversed cumulative trapezoid.
      const std::size_t n = d.phi.size();
      d.psi2.assign(n, 0.0);
      double acc = 0.0;
      for (std::size_t j = n - 1; j-- > 0;) {
        acc += 0.5 * grid_.dx * (d.phi[j] + d.phi[j + 1]);
        d.psi2[j] = acc * acc;
      }
      duals_.push_back(std::move(d));
    }
  }
  const std::size_t np = phis_.size(), nd = duals_.size();
  first_pair_.assign(np, 0.0);
  prev_drift_.assign(np, 0.0);
  drift_int_.assign(np, 0.0);
  comp_.assign(np, 0.0);
  prev_comp_rate_.assign(np, 0.0);
  dual_first_.assign(nd, 0.0);
  dual_prev_drift_.assign(nd, 0.0);
  dual_drift_int_.assign(nd, 0.0);
  dual_comp_.assign(nd, 0.0);
  dual_prev_rate_.assign(nd, 0.0);
  out_.pairing.resize(np);
  out_.martingale.resize(np);
  out_.compensator.resize(np);
  out_.dual_residual.resize(nd);
  out_.dual_compensator.resize(nd);
}

void SummaryObserver::observe(std::size_t step, double t, std::span<const double> mu, std::span<const double> gamma) {
  const double dx = grid_.dx;
  const double h = started_ ? t - last_t_ : 0.0;

  std::vector<double> pair(phis_.size());
  for (std::size_t q = 0; q < phis_.size(); ++q) {
    const auto& s = phis_[q];
    pair[q] = trapezoid_product(mu, s.f, dx);
    const double drift = trapezoid_product(mu, s.d2, dx);
    std::vector<double> gf(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) gf[i] = gamma[i] * s.f2[i];
    const double rate = trapezoid_product(mu, gf, dx);
    if (!started_) {
      first_pair_[q] = pair[q];
    } else {
      drift_int_[q] += 0.5 * h * (prev_drift_[q] + drift);
      comp_[q] += h * prev_comp_rate_[q];
    }
    prev_drift_[q] = drift;
    prev_comp_rate_[q] = rate;
  }

  std::vector<double> dual_pair(duals_.size());
  for (std::size_t q = 0; q < duals_.size(); ++q) {
    const auto& d = duals_[q];
    const auto seg = mu.subspan(d.first, d.last - d.first + 1);
    u_buf_ = cumulative_trapezoid(seg, dx);
    const std::size_t n = u_buf_.size();
    dual_pair[q] = trapezoid_product(u_buf_, d.phi, dx);
    double drift = trapezoid_product(u_buf_, d.d2, dx);
    if (d.phi_b != 0.0) drift += d.phi_b * (3.0 * u_buf_[n - 1] - 4.0 * u_buf_[n - 2] + u_buf_[n - 3]) / (2.0 * dx);
    const double rate = gamma[d.first] * trapezoid_product(seg, d.psi2, dx);
    if (!started_) {
      dual_first_[q] = dual_pair[q];
    } else {
      dual_drift_int_[q] += 0.5 * h * (dual_prev_drift_[q] + drift);
      dual_comp_[q] += h * dual_prev_rate_[q];
    }
    dual_prev_drift_[q] = drift;
    dual_prev_rate_[q] = rate;
  }

  started_ = true;
  last_t_ = t;
  if (step % every_ != 0 && step != steps_) return;

  times_.push_back(t);
  out_.mass.push_back(trapezoid(mu, dx));
  for (std::size_t q = 0; q < phis_.size(); ++q) {
    out_.pairing[q].push_back(pair[q]);
    out_.martingale[q].push_back(pair[q] - first_pair_[q] - 0.5 * drift_int_[q]);
    out_.compensator[q].push_back(comp_[q]);
  }
  double wm = 0.0;
  {
    std::vector<double> v(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) v[i] = std::pow(std::max(mu[i], 0.0), 2.0 * p_) * (*weight_)[i];
    wm = trapezoid(v, dx);
  }
  out_.weighted_moment.push_back(wm);
  for (std::size_t q = 0; q < duals_.size(); ++q) {
    out_.dual_residual[q].push_back(dual_pair[q] - dual_first_[q] - 0.5 * dual_drift_int_[q]);
    out_.dual_compensator[q].push_back(dual_comp_[q]);
  }
}

ReplicateSummary SummaryObserver::take() { return std::move(out_); }

ReplicateSet run_replicates(const SimConfig& config, std::uint64_t base_seed, std::size_t replicates,
                            const SummarySpec& spec, std::size_t threads) {
  config.validate();
  if (replicates == 0) throw ConfigError("replicates must be >= 1");
  ReplicateSet set;
  set.base_seed = base_seed;
  set.seeds = noise::independent_streams(base_seed, replicates);
  set.initial_mass = trapezoid(config.initial.sample(config.grid()).values, config.dx);
  for (const auto& phi : spec.phis) set.phi_names.push_back(phi.name);
  set.reps.resize(replicates);

  SummarySpec resolved = spec;
  if (!resolved.record_every) resolved.record_every = config.output_every ? config.output_every : config.steps();
  SimConfig lean = config;
  lean.output_every = 0;
  std::unique_ptr<MildScheme> mild;
  if (config.scheme == SchemeKind::mild) mild = std::make_unique<MildScheme>(lean);

  std::vector<std::vector<double>> times(replicates);
  parallel_for(replicates, threads, [&](std::size_t r) {
    SummaryObserver obs(lean, resolved);
    RunOptions opts;
    opts.observer = &obs;
    const auto traj = mild ? mild->run(set.seeds[r], opts) : simulate(lean, set.seeds[r], opts);
    set.reps[r] = obs.take();
    set.reps[r].repairs = traj.repairs;
    times[r] = obs.times();
  });
  set.times = times.front();
  return set;
}

ReplicateSet summarize(const std::vector<DensityTrajectory>& trajs, const SimConfig& config, const SummarySpec& spec) {
  if (trajs.empty()) throw DomainError("summarize: no trajectories");
  ReplicateSet set;
  SummarySpec every = spec;
  every.record_every = 1;
  for (const auto& phi : spec.phis) set.phi_names.push_back(phi.name);
  set.initial_mass = trapezoid(trajs.front().fields.front(), trajs.front().grid.dx);
  for (const auto& tr : trajs) {
    SummaryObserver obs(config, every);
    for (std::size_t k = 0; k < tr.fields.size(); ++k) {
      const auto f = tr.field(k);
      const auto gamma = rate_field(config.branching, f);
      obs.observe(k, tr.times[k], f.values, gamma);
    }
    set.times = obs.times();
    set.seeds.push_back(tr.seed);
    auto s = obs.take();
    s.repairs = tr.repairs;
    set.reps.push_back(std::move(s));
  }
  return set;
}

// ---------------------------------------------------------------------------------------------

VerificationReport check_mass_martingale(const ReplicateSet& set) {
  require_replicates(set, kMinReplicates, "check_mass_martingale");
  VerificationReport rep;
  rep.check = "mass-martingale";
  rep.replicates = set.reps.size();
  rep.columns = {"t", "mean_mass", "se", "deviation", "tolerance"};
  const double m0 = set.initial_mass;
  const double floor = 1e-6 * std::max(std::abs(m0), 1e-300);

  bool all_ok = true;
  double worst_ratio = -1.0;
  Gate worst;
  for (std::size_t j = 0; j < set.times.size(); ++j) {
    const auto v = column(set, j, [](const ReplicateSummary& r) -> const std::vector<double>& { return r.mass; });
    const auto ms = stats::mean_se(v);
    const double tol = std::max(3.0 * ms.se, floor);
    const double dev = ms.mean - m0;
    rep.table.push_back({set.times[j], ms.mean, ms.se, dev, tol});
    const double ratio = std::abs(dev) / tol;
    all_ok = all_ok && std::abs(dev) <= tol;
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst = within("mean mass at all recorded times (worst t = " + fmt(set.times[j]) + ")", ms.mean, m0, ms.se, tol,
                     "|mean - m0| <= max(3 SE, 1e-6 m0) at every recorded time");
    }
    if (j + 1 == set.times.size())
      rep.add(within("mean mass at T", ms.mean, m0, ms.se, tol, "|mean - m0| <= max(3 SE, 1e-6 m0)"));
  }
  worst.pass = all_ok;
  rep.add(worst);

  // Pooled lag-1 correlation of standardized increments.
  const std::size_t J = set.times.size();
  if (J >= 3) {
    std::vector<std::vector<double>> inc(J - 1);
    for (std::size_t j = 0; j + 1 < J; ++j) {
      for (const auto& r : set.reps) inc[j].push_back(r.mass[j + 1] - r.mass[j]);
      const auto ms = stats::mean_se(inc[j]);
      for (double& x : inc[j]) x = ms.sd > 0.0 ? (x - ms.mean) / ms.sd : 0.0;
    }
    std::vector<double> a, b;
    for (std::size_t j = 0; j + 2 < J; ++j) {
      a.insert(a.end(), inc[j].begin(), inc[j].end());
      b.insert(b.end(), inc[j + 1].begin(), inc[j + 1].end());
    }
    const double rho = stats::pearson(a, b);
    const double tol = 4.0 / std::sqrt(static_cast<double>(set.reps.size()));
    rep.add(within("lag-1 increment correlation", rho, 0.0, 0.0, tol, "|rho| <= 4/sqrt(R)"));
  }
  return rep;
}

VerificationReport check_qv(const ReplicateSet& set, std::size_t phi_index, const double* reference) {
  require_replicates(set, kMinReplicates, "check_qv");
  if (phi_index >= set.phi_names.size()) throw DomainError("check_qv: no such test function");
  VerificationReport rep;
  rep.check = "quadratic-variation";
  rep.replicates = set.reps.size();
  rep.columns = {"t", "mean_M2", "se_M2", "mean_compensator", "se_compensator"};
  for (std::size_t j = 0; j < set.times.size(); ++j) {
    std::vector<double> l, r;
    for (const auto& s : set.reps) {
      const double m = s.martingale[phi_index][j];
      l.push_back(m * m);
      r.push_back(s.compensator[phi_index][j]);
    }
    const auto ml = stats::mean_se(l), mr = stats::mean_se(r);
    rep.table.push_back({set.times[j], ml.mean, ml.se, mr.mean, mr.se});
  }
  const std::size_t J = set.times.size() - 1;
  std::vector<double> l, d;
  for (const auto& s : set.reps) {
    const double m = s.martingale[phi_index][J];
    l.push_back(m * m);
    d.push_back(m * m - s.compensator[phi_index][J]);
  }
  const auto ml = stats::mean_se(l);
  const std::string name = "E[M_T(" + set.phi_names[phi_index] + ")^2]";
  if (reference) {
    const double tol = std::max(0.1 * std::abs(*reference), 3.0 * ml.se);
    rep.add(within(name + " vs closed form", ml.mean, *reference, ml.se, tol, "|left - right| <= max(10% right, 3 SE)"));
  } else {
    const auto md = stats::mean_se(d);
    const double right = ml.mean - md.mean;
    const double tol = std::max(0.1 * std::abs(right), 3.0 * md.se);
    rep.add(within(name + " vs compensator", ml.mean, right, md.se, tol, "|left - right| <= max(10% right, 3 SE)"));
  }
  return rep;
}

VerificationReport check_weighted_moments(const ReplicateSet& set) {
  VerificationReport rep;
  rep.check = "weighted-moments";
  rep.replicates = set.reps.size();
  rep.columns = {"t", "mean", "se"};
  if (set.reps.empty()) throw Refusal("check_weighted_moments: no replicates");
  double v0 = 0.0;
  bool ok = true;
  double worst = -1e300, worst_se = 0.0, worst_bound = 0.0;
  for (std::size_t j = 0; j < set.times.size(); ++j) {
    const auto v =
        column(set, j, [](const ReplicateSummary& r) -> const std::vector<double>& { return r.weighted_moment; });
    const auto ms = stats::mean_se(v);
    if (j == 0) v0 = ms.mean;
    const double bound = 5.0 * v0 + 3.0 * ms.se;
    ok = ok && ms.mean <= bound;
    if (ms.mean - bound > worst - worst_bound) {
      worst = ms.mean;
      worst_se = ms.se;
      worst_bound = bound;
    }
    rep.table.push_back({set.times[j], ms.mean, ms.se});
  }
  Gate g;
  g.name = "sup_t E int mu^{2p} J";
  g.estimate = worst;
  g.reference = 5.0 * v0;
  g.error = worst_se;
  g.tolerance = worst_bound - 5.0 * v0;
  g.rule = "mean <= 5 x (t = 0 value) + 3 SE at every recorded time";
  g.pass = ok;
  rep.add(g);
  return rep;
}

VerificationReport check_duality(const ReplicateSet& set) {
  require_replicates(set, kMinReplicates, "check_duality");
  if (set.reps.front().dual_residual.empty()) throw Refusal("check_duality: replicates carry no duality summary");
  VerificationReport rep;
  rep.check = "duality";
  rep.replicates = set.reps.size();
  rep.columns = {"interval", "mean_residual", "se", "mean_residual2", "mean_compensator"};
  const std::size_t J = set.times.size() - 1;
  for (std::size_t i = 0; i < set.reps.front().dual_residual.size(); ++i) {
    std::vector<double> r, r2, d;
    for (const auto& s : set.reps) {
      const double v = s.dual_residual[i][J];
      r.push_back(v);
      r2.push_back(v * v);
      d.push_back(v * v - s.dual_compensator[i][J]);
    }
    const auto mr = stats::mean_se(r), m2 = stats::mean_se(r2), md = stats::mean_se(d);
    const double comp = m2.mean - md.mean;
    rep.table.push_back({static_cast<double>(i), mr.mean, mr.se, m2.mean, comp});
    const std::string tag = "interval " + std::to_string(i);
    rep.add(within(tag + " mean residual", mr.mean, 0.0, mr.se, std::max(3.0 * mr.se, 1e-12), "|mean| <= 3 SE"));
    rep.add(within(tag + " residual second moment vs compensator", m2.mean, comp, md.se,
                   std::max(0.1 * std::abs(comp), 3.0 * md.se), "|left - right| <= max(10% right, 3 SE)"));
  }
  return rep;
}

std::vector<double> duality_residual(const UTrajectory& u, const std::vector<testfn::TestFunction>& phis) {
  if (u.states.empty()) throw DomainError("duality_residual: empty trajectory");
  const std::size_t n_int = u.states.front().intervals();
  if (phis.size() != n_int) throw DomainError("duality_residual: need one test function per interval");
  std::vector<double> out(n_int, 0.0);
  for (std::size_t i = 0; i < n_int; ++i) {
    const Grid1D& g = u.states.front().u[i].grid;
    const bool last = i + 1 == n_int;
    testfn::check_dual_constraints(phis[i], g.front(), g.back(), last);
    std::vector<double> f(g.size), d2(g.size);
    for (std::size_t j = 0; j < g.size; ++j) {
      f[j] = phis[i].f(g.x(j));
      d2[j] = phis[i].d2(g.x(j));
    }
    const double phi_b = phis[i].f(g.back());
    auto drift = [&](const GridField& v) {
      double s = trapezoid_product(v.values, d2, g.dx);
      if (phi_b != 0.0) s += phi_b * gradient_at(v, g.back());
      return s;
    };
    double integral = 0.0;
    double prev = drift(u.states.front().u[i]);
    for (std::size_t k = 1; k < u.states.size(); ++k) {
      const double cur = drift(u.states[k].u[i]);
      integral += 0.5 * (u.times[k] - u.times[k - 1]) * (prev + cur);
      prev = cur;
    }
    out[i] = trapezoid_product(u.states.back().u[i].values, f, g.dx) -
             trapezoid_product(u.states.front().u[i].values, f, g.dx) - 0.5 * integral;
  }
  return out;
}

double boundary_functional(const GridField& u, const testfn::TestFunction& phi) {
  const double a = u.grid.front(), b = u.grid.back();
  const double grad_a = gradient_at(u, a);
  const double grad_b = gradient_at(u, b);
  return (phi.f(b) * grad_b - phi.f(a) * grad_a) - (u.values.back() * phi.d1(b) - u.values.front() * phi.d1(a));
}

VerificationReport appendix_hk_limits(const testfn::EndpointFunction& f, const std::vector<int>& k_list, double dx) {
  if (k_list.empty()) throw DomainError("appendix_hk_limits: empty k list");
  const int kmax = *std::max_element(k_list.begin(), k_list.end());
  const double required = 1.0 / (50.0 * kmax);
  if (dx <= 0.0) dx = 1.0 / (400.0 * kmax);
  if (dx > required) {
    std::ostringstream os;
    os << "appendix_hk_limits: dx = " << dx << " does not resolve Phi(kx); need dx <= " << required;
    throw Refusal(os.str());
  }
  const auto n = static_cast<std::size_t>(std::ceil(1.0 / dx));
  const double h = 1.0 / static_cast<double>(n);
  std::vector<double> fx(n + 1);
  for (std::size_t j = 0; j <= n; ++j) fx[j] = f.f(static_cast<double>(j) * h);

  const double lim1 = f.f0 - f.f1;
  const double lim2 = f.df1 - f.df0;
  VerificationReport rep;
  rep.check = "appendix-hk";
  rep.columns = {"k", "pair_d1", "error_d1", "pair_d2", "error_d2"};
  std::vector<double> e1, e2;
  for (int k : k_list) {
    std::vector<double> d1(n + 1), d2(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
      const auto v = kernels::h_k(k, std::min(1.0, static_cast<double>(j) * h));
      d1[j] = v.d1;
      d2[j] = v.d2;
    }
    const double p1 = trapezoid_product(fx, d1, h);
    const double p2 = trapezoid_product(fx, d2, h);
    e1.push_back(std::abs(p1 - lim1));
    e2.push_back(std::abs(p2 - lim2));
    rep.table.push_back({static_cast<double>(k), p1, e1.back(), p2, e2.back()});
  }
  auto gates = [&](const std::string& what, const std::vector<double>& e, double lim) {
    constexpr double converged = 1e-9;
    bool mono = true;
    for (std::size_t j = 1; j < e.size(); ++j) mono = mono && (e[j] <= e[j - 1] || e[j] < converged);
    Gate g;
    g.name = f.name + " " + what + " error nonincreasing in k";
    g.estimate = e.back();
    g.reference = 0.0;
    g.rule = "error(k_{j+1}) <= error(k_j) or below 1e-9";
    g.pass = mono;
    rep.add(g);
    rep.add(within(f.name + " " + what + " final error", e.back(), 0.0, e.back(), 0.02 * (1.0 + std::abs(lim)),
                   "error <= 0.02 (1 + |limit|)"));
  };
  gates("<f, h_k'>", e1, lim1);
  gates("<f, h_k''>", e2, lim2);
  return rep;
}

VerificationReport feller_compare(const std::vector<double>& terminal, const RateFunction& g, double z0, double t,
                                  const std::vector<double>& lambdas) {
  if (!g.is_constant()) throw Refusal("feller_compare: the rate is not constant, no closed form");
  if (terminal.size() < 10000) {
    std::ostringstream os;
    os << "feller_compare: needs at least 10000 paths, got " << terminal.size();
    throw Refusal(os.str());
  }
  const double gamma = g.params()[0] * g.params()[0];
  VerificationReport rep;
  rep.check = "feller";
  rep.replicates = terminal.size();
  rep.columns = {"lambda", "monte_carlo", "se", "closed_form"};
  std::vector<double> v(terminal.size());
  for (double lam : lambdas) {
    for (std::size_t i = 0; i < terminal.size(); ++i) v[i] = std::exp(-lam * terminal[i]);
    const auto ms = stats::mean_se(v);
    const double exact = std::exp(-lam * z0 / (1.0 + gamma * lam * t / 2.0));
    rep.table.push_back({lam, ms.mean, ms.se, exact});
    rep.add(within("E exp(-" + fmt(lam) + " Z_t)", ms.mean, exact, ms.se, 3.0 * ms.se, "|mc - exact| <= 3 SE"));
  }
  for (std::size_t i = 0; i < terminal.size(); ++i) v[i] = terminal[i] == 0.0 ? 1.0 : 0.0;
  const auto ms = stats::mean_se(v);
  const double exact = std::exp(-2.0 * z0 / (gamma * t));
  rep.add(within("P(Z_t = 0)", ms.mean, exact, ms.se, 3.0 * ms.se, "|mc - exact| <= 3 SE"));
  return rep;
}

VerificationReport pathwise_stability(const SimConfig& requested, std::uint64_t seed, const std::vector<double>& eps) {
  requested.validate();
  // The two-point law picks a discrete branch per cell, and one flipped branch decouples the runs
  // for good. Clipping is continuous in the state, which is what a coupling check needs.
  SimConfig config = requested;
  config.positivity = Positivity::clip;
  const auto base = distribution_state(config.initial.sample(config.grid()), config.branching);
  UOptions o0;
  o0.initial = &base;
  const auto ref = simulate_u_system(config, seed, o0);

  auto distance = [&](const UTrajectory& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < ref.states.size(); ++k)
      for (std::size_t i = 0; i < ref.states[k].u.size(); ++i) {
        const auto& x = ref.states[k].u[i].values;
        const auto& y = b.states[k].u[i].values;
        for (std::size_t j = 0; j < x.size(); ++j) d = std::max(d, std::abs(x[j] - y[j]));
      }
    return d;
  };

  VerificationReport rep;
  rep.check = "pathwise-stability";
  rep.columns = {"eps", "sup_distance"};
  std::vector<double> sorted = eps;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> dist;
  for (double e : sorted) {
    if (e < 0.0) throw DomainError("pathwise_stability: eps must be nonnegative");
    // Scaling every u^i by the same factor keeps the perturbation inside the support, so it moves
    // cell masses already present instead of seeding mass in the empty tails.
    auto perturbed = base;
    double top = 0.0;
    for (const auto& f : perturbed.u) top = std::max(top, f.values.back());
    for (auto& f : perturbed.u)
      for (double& v : f.values) v += top > 0.0 ? e * v / top : 0.0;
    UOptions o;
    o.initial = &perturbed;
    dist.push_back(distance(simulate_u_system(config, seed, o)));
    rep.table.push_back({e, dist.back()});
  }
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    if (sorted[j] == 0.0) rep.add(within("eps = 0 distance", dist[j], 0.0, 0.0, 0.0, "runs identical"));
  }
  bool mono = true;
  for (std::size_t j = 1; j < dist.size(); ++j) mono = mono && dist[j] >= dist[j - 1];
  Gate g;
  g.name = "distance nondecreasing in eps";
  g.estimate = dist.empty() ? 0.0 : dist.back();
  g.rule = "d(eps_{j+1}) >= d(eps_j)";
  g.pass = mono;
  rep.add(g);
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    if (sorted[j] > 0.0) {
      Gate b;
      b.name = "distance at eps = " + fmt(sorted[j]);
      b.estimate = dist[j];
      b.tolerance = 10.0 * sorted[j];
      b.rule = "sup distance <= 10 eps";
      b.pass = dist[j] <= b.tolerance;
      rep.add(b);
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------------------------

HoelderReport fit_hoelder(Direction dir, double order, const std::vector<double>& lags,
                          const std::vector<std::vector<double>>& moments, std::uint64_t boot_seed,
                          std::size_t resamples) {
  const std::size_t R = moments.size();
  if (R == 0) throw Refusal("estimate_hoelder: no replicates");
  for (std::size_t j = 1; j < lags.size(); ++j)
    if (std::abs(lags[j] / lags[j - 1] - 2.0) > 1e-9) throw DomainError("estimate_hoelder: lag grid must be dyadic");

  auto means = [&](const std::vector<std::size_t>* idx) {
    std::vector<double> m(lags.size(), 0.0);
    for (std::size_t l = 0; l < lags.size(); ++l) {
      CompensatedSum s;
      for (std::size_t r = 0; r < R; ++r) s.add(moments[idx ? (*idx)[r] : r][l]);
      m[l] = s.value() / static_cast<double>(R);
    }
    return m;
  };
  auto slope_of = [&](const std::vector<double>& m, std::vector<double>* used_lags) {
    std::vector<double> lx, ly;
    for (std::size_t l = 0; l < lags.size(); ++l) {
      if (!(m[l] > 0.0) || !std::isfinite(m[l])) continue;
      lx.push_back(std::log(lags[l]));
      ly.push_back(std::log(m[l]));
      if (used_lags) used_lags->push_back(lags[l]);
    }
    if (lx.size() < 4) return std::nan("");
    return stats::fit_line(lx, ly).slope;
  };

  HoelderReport rep;
  rep.direction = dir;
  rep.order = order;
  rep.replicates = R;
  const auto m = means(nullptr);
  std::vector<double> used;
  rep.slope = slope_of(m, &used);
  if (std::isnan(rep.slope)) {
    std::ostringstream os;
    os << "estimate_hoelder: only " << used.size() << " usable lags, need 4";
    throw Refusal(os.str());
  }
  rep.lags = lags;
  rep.moments = m;
  std::vector<double> boots;
  for (std::size_t b = 0; b < resamples; ++b) {
    const auto idx = stats::bootstrap_indices(boot_seed, b, R);
    const double s = slope_of(means(&idx), nullptr);
    if (std::isfinite(s)) boots.push_back(s);
  }
  rep.slope_lo = boots.empty() ? rep.slope : stats::quantile(boots, 0.025);
  rep.slope_hi = boots.empty() ? rep.slope : stats::quantile(boots, 0.975);
  rep.exponent = rep.slope / order;
  rep.exponent_lo = rep.slope_lo / order;
  rep.exponent_hi = rep.slope_hi / order;
  return rep;
}

HoelderObserver::HoelderObserver(const SimConfig& config, Direction dir, double order, HoelderWindow window)
    : HoelderObserver(config.grid(), config.steps(), config.dt, dir, order, std::move(window)) {}

HoelderObserver::HoelderObserver(const Grid1D& grid, std::size_t steps, double dt, Direction dir, double order,
                                 HoelderWindow window)
    : grid_(grid), dt_(dt), dir_(dir), order_(order), win_(std::move(window)) {
  if (win_.lags.empty()) throw DomainError("HoelderObserver: empty lag list");
  if (!(win_.x_hi > win_.x_lo)) throw DomainError("HoelderObserver: empty x window");
  first_ = static_cast<std::size_t>(std::max(0.0, std::ceil((win_.x_lo - grid.origin) / grid.dx - 1e-9)));
  last_ = std::min(grid.size - 1, static_cast<std::size_t>(std::floor((win_.x_hi - grid.origin) / grid.dx + 1e-9)));
  if (last_ <= first_) throw DomainError("HoelderObserver: window holds fewer than two nodes");
  start_step_ = static_cast<std::size_t>(std::ceil(win_.t_from * static_cast<double>(steps) - 1e-9));
  sums_.assign(win_.lags.size(), 0.0);
  counts_.assign(win_.lags.size(), 0);
  if (dir_ == Direction::time) ring_.resize(win_.lags.back() + 1);
}

void HoelderObserver::observe(std::size_t step, double, std::span<const double> mu, std::span<const double>) {
  if (step < start_step_) return;
  if (dir_ == Direction::space) {
    for (std::size_t l = 0; l < win_.lags.size(); ++l) {
      const std::size_t h = win_.lags[l];
      double s = 0.0;
      std::size_t c = 0;
      for (std::size_t i = first_; i + h <= last_; ++i, ++c) s += power(mu[i + h] - mu[i], order_);
      sums_[l] += s;
      counts_[l] += c;
    }
    return;
  }
  const std::size_t M = ring_.size();
  auto& slot = ring_[step % M];
  slot.assign(mu.begin() + static_cast<std::ptrdiff_t>(first_), mu.begin() + static_cast<std::ptrdiff_t>(last_) + 1);
  for (std::size_t l = 0; l < win_.lags.size(); ++l) {
    const std::size_t h = win_.lags[l];
    if (step < start_step_ + h) continue;
    const auto& old = ring_[(step - h) % M];
    double s = 0.0;
    for (std::size_t i = 0; i < slot.size(); ++i) s += power(slot[i] - old[i], order_);
    sums_[l] += s;
    counts_[l] += slot.size();
  }
}

std::vector<double> HoelderObserver::moments() const {
  std::vector<double> m(sums_.size());
  for (std::size_t l = 0; l < m.size(); ++l) m[l] = counts_[l] ? sums_[l] / static_cast<double>(counts_[l]) : 0.0;
  return m;
}

std::vector<double> HoelderObserver::lags() const {
  std::vector<double> out;
  const double unit = dir_ == Direction::time ? dt_ : grid_.dx;
  for (std::size_t h : win_.lags) out.push_back(static_cast<double>(h) * unit);
  return out;
}

HoelderReport estimate_hoelder(const std::vector<DensityTrajectory>& trajs, Direction dir, double p,
                               const HoelderWindow& window, std::uint64_t boot_seed) {
  if (trajs.empty()) throw Refusal("estimate_hoelder: no trajectories");
  const auto& t0 = trajs.front();
  if (t0.times.size() < 2) throw Refusal("estimate_hoelder: trajectories store fewer than two times");
  const double dt = t0.times[1] - t0.times[0];
  std::vector<std::vector<double>> moments;
  std::vector<double> lags;
  for (const auto& tr : trajs) {
    HoelderObserver obs(tr.grid, tr.fields.size() - 1, dt, dir, 2.0 * p, window);
    for (std::size_t k = 0; k < tr.fields.size(); ++k) obs.observe(k, tr.times[k], tr.fields[k], {});
    moments.push_back(obs.moments());
    lags = obs.lags();
  }
  return fit_hoelder(dir, 2.0 * p, lags, moments, boot_seed);
}

HoelderReport estimate_hoelder_online(const SimConfig& config, std::uint64_t base_seed, std::size_t replicates,
                                      Direction dir, double p, const HoelderWindow& window, std::size_t threads) {
  config.validate();
  const auto seeds = noise::independent_streams(base_seed, replicates);
  SimConfig lean = config;
  lean.output_every = 0;
  std::vector<std::vector<double>> moments(replicates);
  std::vector<double> lags;
  {
    HoelderObserver probe(lean, dir, 2.0 * p, window);
    lags = probe.lags();
  }
  parallel_for(replicates, threads, [&](std::size_t r) {
    HoelderObserver obs(lean, dir, 2.0 * p, window);
    RunOptions opts;
    opts.observer = &obs;
    (void)simulate(lean, seeds[r], opts);
    moments[r] = obs.moments();
  });
  return fit_hoelder(dir, 2.0 * p, lags, moments, base_seed ^ 0x9E3779B97F4A7C15ull);
}

HoelderReport brownian_control(std::uint64_t seed, std::size_t paths, std::size_t steps, double dt, double p,
                               const std::vector<std::size_t>& lags) {
  if (lags.empty() || lags.back() >= steps) throw DomainError("brownian_control: lags must be shorter than the path");
  const auto seeds = noise::independent_streams(seed, paths);
  const double order = 2.0 * p;
  std::vector<std::vector<double>> moments(paths, std::vector<double>(lags.size(), 0.0));
  std::vector<double> z(steps), b(steps + 1);
  for (std::size_t r = 0; r < paths; ++r) {
    noise::CounterNormal(seeds[r], 0).fill(0, 0, z);
    b[0] = 0.0;
    for (std::size_t k = 0; k < steps; ++k) b[k + 1] = b[k] + std::sqrt(dt) * z[k];
    for (std::size_t l = 0; l < lags.size(); ++l) {
      double s = 0.0;
      const std::size_t h = lags[l];
      for (std::size_t k = h; k <= steps; ++k) s += power(b[k] - b[k - h], order);
      moments[r][l] = s / static_cast<double>(steps + 1 - h);
    }
  }
  std::vector<double> phys;
  for (std::size_t h : lags) phys.push_back(static_cast<double>(h) * dt);
  return fit_hoelder(Direction::time, order, phys, moments, seed + 1);
}

// ---------------------------------------------------------------------------------------------

VerificationReport duality_refinement(const SimConfig& base, const std::vector<double>& dxs) {
  VerificationReport rep;
  rep.check = "duality-refinement";
  rep.columns = {"dx", "dt", "max_abs_residual"};
  std::vector<double> hs, errs;
  const noise::ZeroNoise silent;
  for (double dx : dxs) {
    SimConfig c = base;
    c.dx = dx;
    c.dt = 0.5 * dx * dx;
    c.scheme = SchemeKind::explicit_fd;
    c.output_every = 0;
    SummarySpec spec;
    spec.duality = true;
    SummaryObserver obs(c, spec);
    RunOptions opts;
    opts.noise = &silent;
    opts.observer = &obs;
    (void)simulate_density(c, 0, opts);
    const auto s = obs.take();
    double err = 0.0;
    for (const auto& r : s.dual_residual) err = std::max(err, std::abs(r.back()));
    hs.push_back(dx);
    errs.push_back(err);
    rep.table.push_back({dx, c.dt, err});
  }
  const double order = order_fit(hs, errs);
  Gate g;
  g.name = "residual order in dx";
  g.estimate = order;
  g.reference = 2.0;
  g.tolerance = 0.2;
  g.rule = "fitted order >= 1.8";
  g.pass = order >= 1.8;
  rep.add(g);
  return rep;
}

VerificationReport heat_refinement(const SimConfig& base, const std::vector<double>& dxs) {
  VerificationReport rep;
  rep.check = "heat-refinement";
  rep.columns = {"dx", "dt", "sup_error"};
  std::vector<double> hs, errs;
  const noise::ZeroNoise silent;
  for (double dx : dxs) {
    SimConfig c = base;
    c.dx = dx;
    c.dt = 0.5 * dx * dx;
    c.output_every = 0;
    RunOptions opts;
    opts.noise = &silent;
    const auto tr = simulate_density(c, 0, opts);
    const auto exact = kernels::semigroup_convolve(c.initial.sample(c.grid()), c.horizon);
    double err = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) err = std::max(err, std::abs(tr.fields.back()[i] - exact.values[i]));
    hs.push_back(dx);
    errs.push_back(err);
    rep.table.push_back({dx, c.dt, err});
  }
  const double order = order_fit(hs, errs);
  rep.add(within("sup error order in dx", order, 2.0, 0.0, 0.2, "fitted order in [1.8, 2.2]"));
  return rep;
}

double sup_l2_distance(const DensityTrajectory& a, const DensityTrajectory& b) {
  if (a.fields.size() != b.fields.size() || a.grid.size != b.grid.size)
    throw DomainError("sup_l2_distance: trajectories differ in shape");
  double d = 0.0;
  for (std::size_t k = 0; k < a.fields.size(); ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.grid.size; ++i) {
      const double e = a.fields[k][i] - b.fields[k][i];
      s += e * e;
    }
    d = std::max(d, std::sqrt(s * a.grid.dx));
  }
  return d;
}

VerificationReport blocked_study(const SimConfig& config, const std::vector<int>& ms, std::uint64_t base_seed,
                                 std::size_t replicates) {
  config.validate();
  if (replicates == 0) throw ConfigError("blocked_study: replicates must be >= 1");
  const auto seeds = noise::independent_streams(base_seed, replicates);
  VerificationReport rep;
  rep.check = "blocked-convergence";
  rep.replicates = replicates;
  rep.columns = {"m", "mean_sup_l2", "se"};
  std::vector<std::vector<double>> d(ms.size());
  bool identical = true;
  for (std::size_t r = 0; r < replicates; ++r) {
    const auto ref = simulate_density(config, seeds[r]);
    for (std::size_t j = 0; j < ms.size(); ++j) d[j].push_back(sup_l2_distance(ref, simulate_blocked(config, ms[j], seeds[r])));
    if (r == 0) {
      RunOptions exact;
      exact.exact_root = true;
      const auto deg = simulate_blocked(config, static_cast<int>(config.steps()), seeds[r], exact);
      for (std::size_t k = 0; k < ref.fields.size() && identical; ++k)
        identical = std::memcmp(ref.fields[k].data(), deg.fields[k].data(), ref.fields[k].size() * sizeof(double)) == 0;
      identical = identical && ref.fields.size() == deg.fields.size();
    }
  }
  std::vector<double> means;
  for (std::size_t j = 0; j < ms.size(); ++j) {
    const auto s = stats::mean_se(d[j]);
    means.push_back(s.mean);
    rep.table.push_back({static_cast<double>(ms[j]), s.mean, s.se});
  }
  bool mono = true;
  for (std::size_t j = 1; j < means.size(); ++j) mono = mono && means[j] <= means[j - 1];
  Gate g;
  g.name = "mean sup-t L2 distance nonincreasing in m";
  g.estimate = means.empty() ? 0.0 : means.back();
  g.reference = means.empty() ? 0.0 : means.front();
  g.rule = "d(m_{j+1}) <= d(m_j)";
  g.pass = mono;
  rep.add(g);
  Gate e;
  e.name = "exact-root, one block per step reproduces the explicit scheme";
  e.rule = "bitwise equality of every stored field";
  e.pass = identical;
  e.estimate = identical ? 0.0 : 1.0;
  rep.add(e);
  return rep;
}

VerificationReport u_mass_consistency(const SimConfig& config, std::uint64_t base_seed, std::size_t paths,
                                      double mass_dt, std::size_t threads) {
  config.validate();
  if (config.branching.n() != 0) throw Refusal("u_mass_consistency: needs a rate depending on total mass only (n = 0)");
  const auto useeds = noise::independent_streams(base_seed, paths);
  const auto mseeds = noise::independent_streams(base_seed ^ 0xA5A5A5A5DEADBEEFull, paths);
  SimConfig lean = config;
  lean.output_every = 0;
  const double z0 = trapezoid(config.initial.sample(config.grid()).values, config.dx);
  std::vector<double> u(paths), z(paths);
  parallel_for(paths, threads, [&](std::size_t r) {
    u[r] = simulate_u_system(lean, useeds[r]).states.back().tail;
    z[r] = terminal_mass(config.branching.rates[0], z0, config.horizon, mass_dt, mseeds[r]);
  });
  const auto ks = stats::ks_two_sample(u, z);
  VerificationReport rep;
  rep.check = "u-system-total-mass";
  rep.replicates = paths;
  rep.columns = {"path", "u_tail", "mass"};
  for (std::size_t r = 0; r < paths; ++r) rep.table.push_back({static_cast<double>(r), u[r], z[r]});
  Gate g;
  g.name = "two-sample KS of u^n(L) vs Z_T";
  g.estimate = ks.p_value;
  g.reference = 0.01;
  g.error = ks.statistic;
  g.rule = "p >= 0.01";
  g.pass = ks.p_value >= 0.01;
  rep.add(g);
  return rep;
}

}  // namespace sbm::verify
