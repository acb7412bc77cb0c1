#include "sbm/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "sbm/config.hpp"
#include "sbm/manifest.hpp"
#include "sbm/stats.hpp"

#ifndef SBM_VERSION
#define SBM_VERSION "0.0.0"
#endif

namespace sbm::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::size_t replicates = 0;
  std::string out_dir;
  std::size_t threads = 0;
  std::string format;
  std::vector<int> k_list;
  std::vector<std::string> functions;
  std::vector<std::string> phis;
  std::string manifest_path;
  // Set by replay: configuration taken from a manifest instead of a file.
  const json* config_doc = nullptr;
};

struct Context {
  std::string command;
  std::vector<std::string> argv;
  Options opt;
  RunConfig cfg;
  std::ostream& out;
  std::ostream& err;
  json seeds_info = json::object();
  std::string started;
};

// Runs are described by command + data files + report; the manifest is added on commit.
struct Artifacts {
  std::map<std::string, std::string> files;
  bool pass = true;
};

// The output location is not part of what a run computes, so it stays out of the hash.
std::string config_hash(const RunConfig& c) {
  json j = c.normalized;
  j["output"].erase("dir");
  return sha256_hex(j.dump());
}

json gate_json(const verify::Gate& g) {
  return {{"name", g.name},         {"estimate", g.estimate}, {"reference", g.reference}, {"error", g.error},
          {"tolerance", g.tolerance}, {"rule", g.rule},         {"pass", g.pass}};
}

json report_json(const verify::VerificationReport& r) {
  json gates = json::array();
  for (const auto& g : r.gates) gates.push_back(gate_json(g));
  return {{"check", r.check},     {"replicates", r.replicates}, {"pass", r.pass()},
          {"gates", gates},       {"columns", r.columns},       {"table", r.table}};
}

void print_report(std::ostream& os, const verify::VerificationReport& r) {
  os << "== " << r.check;
  if (r.replicates) os << "  (" << r.replicates << " replicates)";
  os << "  " << (r.pass() ? "PASS" : "FAIL") << "  " << std::fixed << std::setprecision(2) << r.runtime_seconds
     << " s\n";
  os << std::defaultfloat << std::setprecision(6);
  for (const auto& g : r.gates) {
    os << "  " << (g.pass ? "PASS" : "FAIL") << "  " << g.name << ": estimate " << g.estimate << ", reference "
       << g.reference << ", tolerance " << g.tolerance << "  [" << g.rule << "]\n";
  }
  if (!r.table.empty()) {
    std::vector<int> width;
    for (const auto& c : r.columns) width.push_back(std::max<int>(14, static_cast<int>(c.size()) + 2));
    os << "  ";
    for (std::size_t c = 0; c < r.columns.size(); ++c) os << std::setw(width[c]) << r.columns[c];
    os << '\n';
    constexpr std::size_t kShown = 25;
    for (std::size_t k = 0; k < std::min(kShown, r.table.size()); ++k) {
      os << "  ";
      for (std::size_t c = 0; c < r.table[k].size(); ++c)
        os << std::setw(c < width.size() ? width[c] : 14) << r.table[k][c];
      os << '\n';
    }
    if (r.table.size() > kShown) os << "  ... " << r.table.size() - kShown << " more rows in the data file\n";
  }
}

std::string table_csv(const verify::VerificationReport& r) {
  std::string s = "# sbm-table v1 " + r.check + "\n";
  for (std::size_t i = 0; i < r.columns.size(); ++i) s += (i ? "," : "") + r.columns[i];
  s += '\n';
  for (const auto& row : r.table) {
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + round_trip(row[i]);
    s += '\n';
  }
  return s;
}

template <class F>
verify::VerificationReport timed(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  verify::VerificationReport r = f();
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Collects reports into report.json plus one csv table per report, prints them.
class Reporter {
 public:
  Reporter(Context& ctx, Artifacts& art) : ctx_(ctx), art_(art) {}
  void add(const verify::VerificationReport& r, json extra = nullptr) {
    print_report(ctx_.out, r);
    json j = report_json(r);
    if (!extra.is_null()) j.update(extra);
    reports_.push_back(j);
    art_.pass = art_.pass && r.pass();
    if (ctx_.cfg.output.format == "csv") {
      std::string name = r.check + ".csv";
      for (int k = 2; art_.files.count(name); ++k) name = r.check + "-" + std::to_string(k) + ".csv";
      art_.files[name] = table_csv(r);
    }
  }
  void finish() {
    json doc = {{"command", ctx_.command},
                {"version", SBM_VERSION},
                {"config_hash", config_hash(ctx_.cfg)},
                {"seed", ctx_.opt.seed},
                {"pass", art_.pass},
                {"reports", reports_}};
    art_.files["report.json"] = doc.dump(2) + "\n";
    ctx_.out << (art_.pass ? "overall: PASS" : "overall: FAIL") << '\n';
  }

 private:
  Context& ctx_;
  Artifacts& art_;
  json reports_ = json::array();
};

std::size_t replicates(const Context& ctx) { return ctx.opt.replicates ? ctx.opt.replicates : ctx.cfg.verify.replicates; }

void note_streams(Context& ctx, std::uint64_t base, std::size_t count, const std::string& role) {
  const auto seeds = noise::independent_streams(base, count);
  std::string all;
  for (auto s : seeds) all += std::to_string(s) + "\n";
  json head = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(seeds.size(), 8); ++i) head.push_back(seeds[i]);
  ctx.seeds_info[role] = {{"rule", "independent_streams(base_seed, count)"},
                          {"base_seed", base},
                          {"count", count},
                          {"first", head},
                          {"sha256", sha256_hex(all)}};
}

std::size_t record_every(const SimConfig& c) {
  if (c.output_every) return c.output_every;
  return std::max<std::size_t>(1, c.steps() / 20);
}

// ---------------------------------------------------------------------------------------------
// Data emission

std::string header_line(const Context& ctx, const Grid1D& g, std::size_t repairs) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash(ctx.cfg) << " seed=" << ctx.opt.seed << " grid=" << round_trip(g.origin) << ','
     << round_trip(g.dx) << ',' << g.size << " repairs=" << repairs << '\n';
  return os.str();
}

std::string density_csv(const Context& ctx, const DensityTrajectory& tr) {
  std::string s = "# sbm-trajectory v1\n" + header_line(ctx, tr.grid, tr.repairs) + "t,x,value\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const std::string t = round_trip(tr.times[k]) + ",";
    for (std::size_t i = 0; i < tr.grid.size; ++i)
      s += t + round_trip(tr.grid.x(i)) + "," + round_trip(tr.fields[k][i]) + "\n";
  }
  return s;
}

json grid_json(const Grid1D& g) { return {{"origin", g.origin}, {"dx", g.dx}, {"size", g.size}}; }

std::string density_json(const Context& ctx, const DensityTrajectory& tr) {
  json j = {{"format", "sbm-trajectory v1"}, {"config_hash", config_hash(ctx.cfg)}, {"seed", ctx.opt.seed},
            {"grid", grid_json(tr.grid)},    {"repairs", tr.repairs},               {"times", tr.times},
            {"values", tr.fields}};
  return j.dump() + "\n";
}

std::string u_csv(const Context& ctx, const UTrajectory& tr) {
  const Grid1D g = ctx.cfg.sim.grid();
  std::string s = "# sbm-trajectory v1\n" + header_line(ctx, g, tr.repairs) + "t,x,value,interval\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const std::string t = round_trip(tr.times[k]) + ",";
    const auto& st = tr.states[k];
    for (std::size_t i = 0; i < st.u.size(); ++i) {
      const std::string iv = "," + std::to_string(i) + "\n";
      for (std::size_t j = 0; j < st.u[i].size(); ++j)
        s += t + round_trip(st.u[i].grid.x(j)) + "," + round_trip(st.u[i].values[j]) + iv;
    }
  }
  return s;
}

std::string u_json(const Context& ctx, const UTrajectory& tr) {
  json states = json::array();
  for (const auto& st : tr.states) {
    json u = json::array();
    for (const auto& f : st.u) u.push_back({{"grid", grid_json(f.grid)}, {"values", f.values}});
    states.push_back({{"u", u}, {"slopes", st.slopes}, {"tail", st.tail}});
  }
  json j = {{"format", "sbm-trajectory v1"}, {"config_hash", config_hash(ctx.cfg)}, {"seed", ctx.opt.seed},
            {"repairs", tr.repairs},         {"times", tr.times},                   {"states", states}};
  return j.dump() + "\n";
}

std::string mass_csv(const Context& ctx, const MassPath& p) {
  std::string s = "# sbm-mass-path v1\n# config_hash=" + config_hash(ctx.cfg) + " seed=" + std::to_string(p.seed) +
                  "\nt,value\n";
  for (std::size_t k = 0; k < p.times.size(); ++k) s += round_trip(p.times[k]) + "," + round_trip(p.values[k]) + "\n";
  return s;
}

// ---------------------------------------------------------------------------------------------
// Subcommands

void cmd_simulate(Context& ctx, Artifacts& art) {
  const auto tr = simulate(ctx.cfg.sim, ctx.opt.seed);
  ctx.seeds_info["trajectory"] = ctx.opt.seed;
  if (ctx.cfg.output.format == "json") art.files["trajectory.json"] = density_json(ctx, tr);
  else art.files["trajectory.csv"] = density_csv(ctx, tr);
  ctx.out << "t            mass          max\n" << std::setprecision(8);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const auto& f = tr.fields[k];
    ctx.out << std::setw(12) << tr.times[k] << "  " << std::setw(12) << trapezoid(f, tr.grid.dx) << "  "
            << std::setw(12) << *std::max_element(f.begin(), f.end()) << '\n';
  }
  ctx.out << "positivity repairs: " << tr.repairs << '\n';
}

void cmd_simulate_u(Context& ctx, Artifacts& art) {
  const auto tr = simulate_u_system(ctx.cfg.sim, ctx.opt.seed);
  ctx.seeds_info["u_streams"] = {{"seed", ctx.opt.seed}, {"streams", "interval i uses stream i + 1"}};
  if (ctx.cfg.output.format == "json") art.files["u_trajectory.json"] = u_json(ctx, tr);
  else art.files["u_trajectory.csv"] = u_csv(ctx, tr);
  ctx.out << "t            total_mass    slope_mismatch\n" << std::setprecision(8);
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    ctx.out << std::setw(12) << tr.times[k] << "  " << std::setw(12) << tr.states[k].total_mass() << "  "
            << std::setw(12) << tr.states[k].slope_mismatch() << '\n';
  ctx.out << "monotonicity repairs: " << tr.repairs << '\n';
}

const RateFunction& mass_rate(const Context& ctx) {
  const auto& b = ctx.cfg.sim.branching;
  if (b.n() != 0) throw ConfigError("branching.partition: the total-mass process needs n = 0 (empty partition)");
  return b.rates[0];
}

void cmd_simulate_mass(Context& ctx, Artifacts& art) {
  const auto& c = ctx.cfg.sim;
  const auto p = simulate_total_mass(mass_rate(ctx), c.initial.mass, c.horizon, ctx.cfg.verify.mass_dt, ctx.opt.seed);
  ctx.seeds_info["mass"] = ctx.opt.seed;
  if (ctx.cfg.output.format == "json") {
    json j = {{"format", "sbm-mass-path v1"}, {"config_hash", config_hash(ctx.cfg)}, {"seed", p.seed},
              {"times", p.times},             {"values", p.values}};
    art.files["mass_path.json"] = j.dump() + "\n";
  } else {
    art.files["mass_path.csv"] = mass_csv(ctx, p);
  }
  ctx.out << "Z_0 = " << p.values.front() << ", Z_T = " << p.values.back() << '\n';
}

verify::SummarySpec summary_spec(const Context& ctx) {
  verify::SummarySpec s;
  s.phis = resolve_test_functions(ctx.cfg.verify.test_functions);
  s.moment_p = ctx.cfg.verify.moment_p;
  s.record_every = record_every(ctx.cfg.sim);
  return s;
}

verify::ReplicateSet replicate_set(Context& ctx, const verify::SummarySpec& spec) {
  const std::size_t R = replicates(ctx);
  note_streams(ctx, ctx.opt.seed, R, "replicates");
  return verify::run_replicates(ctx.cfg.sim, ctx.opt.seed, R, spec, ctx.opt.threads);
}

void cmd_verify_mp(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  rep.add(timed([&] { return verify::check_mass_martingale(replicate_set(ctx, summary_spec(ctx))); }));
  rep.finish();
}

void cmd_verify_qv(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const auto t0 = std::chrono::steady_clock::now();
  const auto set = replicate_set(ctx, summary_spec(ctx));
  const double sim_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& v = ctx.cfg.verify;
  for (std::size_t i = 0; i < set.phi_names.size(); ++i) {
    auto r = timed([&] { return verify::check_qv(set, i, i == 0 && v.has_qv_reference ? &v.qv_reference : nullptr); });
    r.runtime_seconds += i == 0 ? sim_time : 0.0;
    rep.add(r, {{"test_function", set.phi_names[i]}});
  }
  rep.finish();
}

void cmd_verify_moments(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  auto spec = summary_spec(ctx);
  spec.phis.clear();
  rep.add(timed([&] { return verify::check_weighted_moments(replicate_set(ctx, spec)); }),
          {{"p", ctx.cfg.verify.moment_p}});
  rep.finish();
}

verify::VerificationReport hoelder_gate(const verify::HoelderReport& h, const std::string& check, double lo, double hi,
                                        json& extra) {
  verify::VerificationReport r;
  r.check = check;
  r.replicates = h.replicates;
  r.columns = {"lag", "mean_abs_increment_pow"};
  for (std::size_t i = 0; i < h.lags.size(); ++i) r.table.push_back({h.lags[i], h.moments[i]});
  verify::Gate g;
  g.name = "implied exponent";
  g.estimate = h.exponent;
  g.reference = 0.5 * (lo + hi);
  g.error = 0.5 * (h.exponent_hi - h.exponent_lo);
  g.tolerance = 0.5 * (hi - lo);
  std::ostringstream os;
  os << "exponent in [" << lo << ", " << hi << "]";
  g.rule = os.str();
  g.pass = h.exponent >= lo && h.exponent <= hi;
  r.add(g);
  extra = {{"hoelder",
            {{"direction", h.direction == verify::Direction::time ? "time" : "space"},
             {"order", h.order},
             {"slope", h.slope},
             {"slope_ci", {h.slope_lo, h.slope_hi}},
             {"exponent", h.exponent},
             {"exponent_ci", {h.exponent_lo, h.exponent_hi}}}}};
  return r;
}

void cmd_verify_hoelder(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const auto& v = ctx.cfg.verify;
  json extra;
  // The estimator checks itself on Brownian paths before it is trusted on the density.
  note_streams(ctx, ctx.opt.seed, v.control_paths, "control");
  auto control = timed([&] {
    const auto h = verify::brownian_control(ctx.opt.seed, v.control_paths, v.control_steps,
                                            1.0 / static_cast<double>(v.control_steps), v.hoelder_p,
                                            v.hoelder_window.lags);
    return hoelder_gate(h, "hoelder-control", 0.45, 0.55, extra);
  });
  rep.add(control, extra);
  if (!control.pass()) {
    ctx.err << "estimator self-test failed; density exponents not estimated\n";
    rep.finish();
    return;
  }
  const std::size_t R = replicates(ctx);
  note_streams(ctx, ctx.opt.seed, R, "replicates");
  for (auto dir : {verify::Direction::time, verify::Direction::space}) {
    const bool is_time = dir == verify::Direction::time;
    auto r = timed([&] {
      const auto h =
          verify::estimate_hoelder_online(ctx.cfg.sim, ctx.opt.seed, R, dir, v.hoelder_p, v.hoelder_window, ctx.opt.threads);
      return is_time ? hoelder_gate(h, "hoelder-time", 0.15, 0.35, extra)
                     : hoelder_gate(h, "hoelder-space", 0.35, 0.6, extra);
    });
    rep.add(r, extra);
  }
  rep.finish();
}

SimConfig refine_base(const Context& ctx) {
  SimConfig c = ctx.cfg.sim;
  c.horizon = ctx.cfg.verify.refine_horizon;
  c.scheme = SchemeKind::explicit_fd;
  return c;
}

void cmd_verify_duality(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  auto spec = summary_spec(ctx);
  spec.phis.clear();
  spec.duality = true;
  rep.add(timed([&] { return verify::check_duality(replicate_set(ctx, spec)); }));
  rep.add(timed([&] { return verify::duality_refinement(refine_base(ctx), ctx.cfg.verify.refine_dx); }));
  rep.finish();
}

void cmd_verify_feller(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const auto& c = ctx.cfg.sim;
  const auto& g = mass_rate(ctx);
  const std::size_t paths = ctx.opt.replicates ? ctx.opt.replicates : ctx.cfg.verify.paths;
  note_streams(ctx, ctx.opt.seed, paths, "paths");
  rep.add(timed([&] {
    if (!g.is_constant()) throw Refusal("feller_compare: the rate is not constant, no closed form");
    const auto seeds = noise::independent_streams(ctx.opt.seed, paths);
    std::vector<double> z(paths);
    for (std::size_t i = 0; i < paths; ++i) z[i] = terminal_mass(g, c.initial.mass, c.horizon, ctx.cfg.verify.mass_dt, seeds[i]);
    return verify::feller_compare(z, g, c.initial.mass, c.horizon, ctx.cfg.verify.lambdas);
  }));
  rep.finish();
}

void cmd_verify_stability(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  ctx.seeds_info["u_streams"] = ctx.opt.seed;
  rep.add(timed([&] { return verify::pathwise_stability(ctx.cfg.sim, ctx.opt.seed, ctx.cfg.verify.eps); }));
  rep.finish();
}

void cmd_verify_consistency(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const std::size_t R = replicates(ctx);
  note_streams(ctx, ctx.opt.seed, R, "u_paths");
  note_streams(ctx, ctx.opt.seed ^ 0xA5A5A5A5DEADBEEFull, R, "mass_paths");
  rep.add(timed([&] {
    return verify::u_mass_consistency(ctx.cfg.sim, ctx.opt.seed, R, ctx.cfg.verify.mass_dt, ctx.opt.threads);
  }));
  rep.finish();
}

void cmd_appendix_hk(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const auto ks = ctx.opt.k_list.empty() ? ctx.cfg.verify.k_list : ctx.opt.k_list;
  const auto fs = ctx.opt.functions.empty() ? ctx.cfg.verify.endpoint_functions : ctx.opt.functions;
  for (const auto& name : fs) {
    const auto f = testfn::endpoint_function(name);
    rep.add(timed([&] { return verify::appendix_hk_limits(f, ks, ctx.cfg.verify.quadrature_dx); }),
            {{"function", name}});
  }
  rep.finish();
}

void cmd_appendix_boundary(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const auto us = ctx.opt.functions.empty() ? std::vector<std::string>{"square"} : ctx.opt.functions;
  const auto phis = ctx.opt.phis.empty() ? std::vector<std::string>{"one", "linear"} : ctx.opt.phis;
  const double dx = ctx.cfg.verify.quadrature_dx > 0.0 ? ctx.cfg.verify.quadrature_dx : 1e-3;
  const Grid1D g = Grid1D::span_of(0.0, 1.0, dx);
  for (const auto& un : us) {
    const auto u = testfn::endpoint_function(un);
    const GridField field = GridField::sample(g, u.f);
    verify::VerificationReport r;
    r.check = "boundary-functional";
    r.columns = {"F", "exact"};
    for (const auto& pn : phis) {
      const auto phi = testfn::by_name(pn);
      const double F = verify::boundary_functional(field, phi);
      const double exact = (phi.f(1.0) * u.df1 - phi.f(0.0) * u.df0) - (u.f1 * phi.d1(1.0) - u.f0 * phi.d1(0.0));
      r.table.push_back({F, exact});
      verify::Gate gate;
      gate.name = "F(" + pn + ") for u = " + un;
      gate.estimate = F;
      gate.reference = exact;
      gate.error = std::abs(F - exact);
      gate.tolerance = 10.0 * dx * dx * (1.0 + std::abs(exact));
      gate.rule = "|F - exact| <= 10 dx^2 (1 + |exact|)";
      gate.pass = gate.error <= gate.tolerance;
      r.add(gate);
    }
    rep.add(r, {{"u", un}, {"phis", phis}});
  }
  rep.finish();
}

void cmd_study_refine(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  rep.add(timed([&] { return verify::heat_refinement(refine_base(ctx), ctx.cfg.verify.refine_dx); }));
  rep.add(timed([&] { return verify::duality_refinement(refine_base(ctx), ctx.cfg.verify.refine_dx); }));
  rep.finish();
}

void cmd_study_blocked(Context& ctx, Artifacts& art) {
  Reporter rep(ctx, art);
  const std::size_t R = ctx.opt.replicates ? ctx.opt.replicates : ctx.cfg.verify.study_replicates;
  note_streams(ctx, ctx.opt.seed, R, "replicates");
  SimConfig c = ctx.cfg.sim;
  c.scheme = SchemeKind::explicit_fd;
  rep.add(timed([&] { return verify::blocked_study(c, ctx.cfg.verify.blocks, ctx.opt.seed, R); }));
  rep.finish();
}

using Handler = std::function<void(Context&, Artifacts&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h{
      {"simulate", cmd_simulate},
      {"simulate-u", cmd_simulate_u},
      {"simulate-mass", cmd_simulate_mass},
      {"verify mp", cmd_verify_mp},
      {"verify qv", cmd_verify_qv},
      {"verify hoelder", cmd_verify_hoelder},
      {"verify duality", cmd_verify_duality},
      {"verify feller", cmd_verify_feller},
      {"verify moments", cmd_verify_moments},
      {"verify stability", cmd_verify_stability},
      {"verify consistency", cmd_verify_consistency},
      {"appendix hk", cmd_appendix_hk},
      {"appendix boundary", cmd_appendix_boundary},
      {"study refine", cmd_study_refine},
      {"study blocked", cmd_study_blocked},
  };
  return h;
}

RunConfig load(const Options& opt) {
  if (opt.config_doc) return parse_config(*opt.config_doc);
  if (opt.config_path.empty()) return parse_config(json::object());
  return load_config(opt.config_path);
}

int execute(const std::string& command, const std::vector<std::string>& argv, Options opt, std::ostream& out,
            std::ostream& err) {
  Context ctx{command, argv, opt, {}, out, err, json::object(), utc_timestamp()};
  ctx.cfg = load(opt);
  if (!opt.format.empty()) {
    if (opt.format != "csv" && opt.format != "json") throw ConfigInvalid(std::vector<ConfigIssue>{{"output.format", "must be csv or json"}});
    ctx.cfg.output.format = opt.format;
    ctx.cfg.normalized["output"]["format"] = opt.format;
  }
  if (!opt.out_dir.empty()) {
    ctx.cfg.output.dir = opt.out_dir;
    ctx.cfg.normalized["output"]["dir"] = opt.out_dir;
  }
  OutputDir dir(ctx.cfg.output.dir);
  Artifacts art;
  handlers().at(command)(ctx, art);
  for (const auto& [name, content] : art.files) dir.write(name, content);

  json args = json::array();
  for (const auto& a : argv) args.push_back(a);
  json manifest = {{"tool", "sbm"},
                   {"version", SBM_VERSION},
                   {"command", command},
                   {"argv", args},
                   {"config_hash", config_hash(ctx.cfg)},
                   {"config", ctx.cfg.normalized},
                   {"base_seed", ctx.opt.seed},
                   {"stream_seeds", ctx.seeds_info},
                   {"threads", ctx.opt.threads},
                   {"pass", art.pass},
                   {"started", ctx.started},
                   {"finished", utc_timestamp()}};
  dir.commit(manifest);
  out << "wrote " << dir.target().string() << '\n';
  return art.pass ? Exit::ok : Exit::gate_failure;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const json* config_doc);

int replay(const std::string& manifest_path, const std::string& out_dir, std::size_t threads, std::ostream& out,
           std::ostream& err) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigInvalid(std::vector<ConfigIssue>{{"", "cannot open manifest '" + manifest_path + "'"}});
  const json m = json::parse(in);
  std::vector<std::string> argv;
  const auto& old = m.at("argv");
  for (std::size_t i = 0; i < old.size(); ++i) {
    const std::string a = old[i].get<std::string>();
    if (a == "--config" || a == "--out" || a == "--seed" || a == "--threads") {
      ++i;
      continue;
    }
    argv.push_back(a);
  }
  argv.insert(argv.end(), {"--seed", std::to_string(m.at("base_seed").get<std::uint64_t>()), "--out", out_dir,
                           "--threads", std::to_string(threads)});
  const json config = m.at("config");
  const int status = run_impl(argv, out, err, &config);
  std::ifstream fresh_in(fs::path(out_dir) / "manifest.json");
  if (!fresh_in) return status;
  const json fresh = json::parse(fresh_in);
  std::map<std::string, std::string> want, got;
  for (const auto& f : m.at("outputs")) want[f.at("file").get<std::string>()] = f.at("sha256").get<std::string>();
  for (const auto& f : fresh.at("outputs")) got[f.at("file").get<std::string>()] = f.at("sha256").get<std::string>();
  const bool same = want == got;
  out << (same ? "replay: all checksums reproduced" : "replay: checksum mismatch") << '\n';
  if (!same) return Exit::gate_failure;
  return status;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const json* config_doc) {
  CLI::App app{"Super-Brownian motion with interacting branching: simulation and verification", "sbm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SBM_VERSION);
  Options opt;
  opt.config_doc = config_doc;
  std::string command;

  auto common = [&](CLI::App* s, const std::string& name) {
    s->add_option("--config", opt.config_path, "configuration JSON");
    s->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& v) {
          opt.seed = v;
          opt.seed_given = true;
        },
        "base seed (default: $SBM_SEED, else 1)");
    s->add_option("--replicates", opt.replicates, "replicate or path count (overrides the config)");
    s->add_option("--out", opt.out_dir, "output directory");
    s->add_option("--threads", opt.threads, "worker threads, 0 = auto");
    s->add_option("--format", opt.format, "csv or json");
    s->callback([&command, name] { command = name; });
    return s;
  };

  common(app.add_subcommand("simulate", "density trajectory"), "simulate");
  common(app.add_subcommand("simulate-u", "distribution-function system trajectory"), "simulate-u");
  common(app.add_subcommand("simulate-mass", "total-mass path (n = 0)"), "simulate-mass");
  auto* ver = app.add_subcommand("verify", "statistical checks");
  ver->require_subcommand(1);
  const std::pair<const char*, const char*> checks[] = {
      {"mp", "mass martingale"},
      {"qv", "quadratic variation against its compensator"},
      {"hoelder", "implied Hoelder exponents in time and space"},
      {"duality", "weak-form residuals of the distribution functions"},
      {"feller", "total mass against the Feller closed form"},
      {"moments", "weighted density moments stay bounded"},
      {"stability", "pathwise stability of the distribution-function system"},
      {"consistency", "distribution-function total mass against the mass diffusion"}};
  for (const auto& [n, what] : checks) common(ver->add_subcommand(n, what), std::string("verify ") + n);
  auto* apx = app.add_subcommand("appendix", "deterministic appendix checks");
  apx->require_subcommand(1);
  auto* hk = common(apx->add_subcommand("hk", "limits of <f, h_k'> and <f, h_k''>"), "appendix hk");
  hk->add_option("--k", opt.k_list, "k values")->delimiter(',');
  hk->add_option("--f", opt.functions, "endpoint functions")->delimiter(',');
  auto* bd = common(apx->add_subcommand("boundary", "boundary functional F(phi)"), "appendix boundary");
  bd->add_option("--u", opt.functions, "endpoint functions used as u")->delimiter(',');
  bd->add_option("--phi", opt.phis, "test functions")->delimiter(',');
  auto* st = app.add_subcommand("study", "convergence studies");
  st->require_subcommand(1);
  common(st->add_subcommand("refine", "zero-noise refinement"), "study refine");
  common(st->add_subcommand("blocked", "blocked scheme vs explicit scheme"), "study blocked");
  std::string validate_path;
  auto* val = app.add_subcommand("validate", "check a configuration file");
  val->add_option("config", validate_path, "configuration JSON")->required();
  val->callback([&] { command = "validate"; });
  std::string manifest_path;
  auto* rep = app.add_subcommand("replay", "rerun from a manifest and compare checksums");
  rep->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
  rep->add_option("--out", opt.out_dir, "output directory")->required();
  rep->add_option("--threads", opt.threads, "worker threads, 0 = auto");
  rep->callback([&] { command = "replay"; });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return Exit::ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return Exit::ok;
  } catch (const CLI::CallForVersion& e) {
    out << SBM_VERSION << '\n';
    return Exit::ok;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return Exit::config_error;
  }

  if (!opt.seed_given) {
    if (const char* env = std::getenv("SBM_SEED")) {
      try {
        std::size_t pos = 0;
        opt.seed = std::stoull(env, &pos);
        if (pos != std::string(env).size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        err << "SBM_SEED: not an unsigned 64-bit integer: " << env << '\n';
        return Exit::config_error;
      }
    }
  }

  try {
    if (command == "validate") {
      std::ifstream in(validate_path);
      if (!in) {
        err << "cannot open " << validate_path << '\n';
        return Exit::config_error;
      }
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        err << "JSON parse error: " << e.what() << '\n';
        return Exit::config_error;
      }
      const auto issues = validate_config(doc);
      if (issues.empty()) {
        out << parse_config(doc).normalized.dump(2) << '\n';
        return Exit::ok;
      }
      for (const auto& i : issues) err << (i.path.empty() ? "<root>" : i.path) << ": " << i.message << '\n';
      return Exit::config_error;
    }
    if (command == "replay") return replay(manifest_path, opt.out_dir, opt.threads, out, err);
    return execute(command, args, opt, out, err);
  } catch (const ConfigInvalid& e) {
    for (const auto& i : e.issues()) err << (i.path.empty() ? "<root>" : i.path) << ": " << i.message << '\n';
    return Exit::config_error;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return Exit::config_error;
  } catch (const Refusal& e) {
    err << "refused: " << e.what() << '\n';
    return Exit::config_error;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << '\n';
    return Exit::numerical_abort;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << '\n';
    return Exit::config_error;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_impl(args, out, err, nullptr);
}

}  // namespace sbm::cli
