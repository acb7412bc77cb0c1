#include "sbm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sbm {

using nlohmann::json;

ConfigInvalid::ConfigInvalid(std::vector<ConfigIssue> issues)
    : ConfigError([&] {
        std::ostringstream os;
        os << "invalid configuration:";
        for (const auto& i : issues) os << "\n  " << (i.path.empty() ? "<root>" : i.path) << ": " << i.message;
        return os.str();
      }()),
      issues_(std::move(issues)) {}

namespace {

const std::vector<std::string> kSections{"grid", "time", "initial", "branching", "scheme", "verify", "output"};

// Reads typed fields out of one JSON object, recording a diagnostic per bad field.
class Reader {
 public:
  Reader(const json& doc, std::vector<ConfigIssue>& issues) : doc_(doc), issues_(issues) {}

  void fail(const std::string& path, const std::string& msg) { issues_.push_back({path, msg}); }

  const json* section(const std::string& name) {
    if (!doc_.contains(name)) return nullptr;
    const json& s = doc_.at(name);
    if (!s.is_object()) {
      fail(name, "must be an object");
      return nullptr;
    }
    return &s;
  }

  template <class T>
  void get(const json* obj, const std::string& sec, const std::string& key, T& out) {
    if (!obj || !obj->contains(key)) return;
    const json& v = obj->at(key);
    const std::string path = sec + "." + key;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw std::invalid_argument("must be finite");
      } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if (std::is_same_v<T, std::size_t> && v.get<long long>() < 0) throw std::invalid_argument("must be >= 0");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
        out = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
        out = v.get<bool>();
      } else {
        if (!v.is_array()) throw std::invalid_argument("expected an array");
        out = v.get<T>();
      }
    } catch (const std::exception& e) {
      fail(path, e.what());
    }
  }

  void unknown_keys(const json* obj, const std::string& sec, std::initializer_list<const char*> known) {
    if (!obj) return;
    for (const auto& [k, _] : obj->items()) {
      bool ok = false;
      for (const char* n : known) ok = ok || k == n;
      if (!ok) fail(sec + "." + k, "unknown field");
    }
  }

 private:
  const json& doc_;
  std::vector<ConfigIssue>& issues_;
};

std::vector<NamedFunction> named_list(Reader& r, const json* obj, const std::string& sec, const std::string& key) {
  std::vector<NamedFunction> out;
  if (!obj || !obj->contains(key)) return out;
  const json& a = obj->at(key);
  const std::string base = sec + "." + key;
  if (!a.is_array()) {
    r.fail(base, "expected an array of {name, params}");
    return out;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string p = base + "[" + std::to_string(i) + "]";
    NamedFunction f;
    if (a[i].is_string()) {
      f.name = a[i].get<std::string>();
    } else if (a[i].is_object() && a[i].contains("name") && a[i]["name"].is_string()) {
      f.name = a[i]["name"].get<std::string>();
      if (a[i].contains("params")) {
        if (!a[i]["params"].is_array()) {
          r.fail(p + ".params", "expected an array of numbers");
          continue;
        }
        try {
          f.params = a[i]["params"].get<std::vector<double>>();
        } catch (const std::exception&) {
          r.fail(p + ".params", "expected an array of numbers");
          continue;
        }
      }
    } else {
      r.fail(p, "expected a name or {name, params}");
      continue;
    }
    out.push_back(std::move(f));
  }
  return out;
}

json named_json(const std::vector<NamedFunction>& fs) {
  json a = json::array();
  for (const auto& f : fs) a.push_back({{"name", f.name}, {"params", f.params}});
  return a;
}

json rate_json(const RateFunction& g) { return {{"name", std::string(g.name())}, {"params", g.params()}}; }

const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::explicit_fd: return "explicit";
    case SchemeKind::blocked: return "blocked";
    case SchemeKind::mild: return "mild";
  }
  return "explicit";
}

}  // namespace

std::vector<testfn::TestFunction> resolve_test_functions(const std::vector<NamedFunction>& specs) {
  std::vector<testfn::TestFunction> out;
  for (const auto& s : specs) out.push_back(testfn::by_name(s.name, s.params));
  return out;
}

RunConfig parse_config(const json& doc) {
  std::vector<ConfigIssue> issues;
  if (!doc.is_object()) throw ConfigInvalid(std::vector<ConfigIssue>{{"", "configuration must be a JSON object"}});
  Reader r(doc, issues);
  for (const auto& [k, _] : doc.items()) {
    if (std::find(kSections.begin(), kSections.end(), k) == kSections.end())
      r.fail(k, "unknown section; expected one of grid, time, initial, branching, scheme, verify, output");
  }

  RunConfig rc;
  SimConfig& c = rc.sim;

  const json* grid = r.section("grid");
  r.get(grid, "grid", "half_width", c.half_width);
  r.get(grid, "grid", "dx", c.dx);
  r.unknown_keys(grid, "grid", {"half_width", "dx"});

  const json* time = r.section("time");
  r.get(time, "time", "dt", c.dt);
  r.get(time, "time", "horizon", c.horizon);
  r.get(time, "time", "output_every", c.output_every);
  r.unknown_keys(time, "time", {"dt", "horizon", "output_every"});

  const json* init = r.section("initial");
  r.get(init, "initial", "profile", c.initial.name);
  r.get(init, "initial", "mass", c.initial.mass);
  r.get(init, "initial", "center", c.initial.center);
  r.get(init, "initial", "sigma", c.initial.sigma);
  r.unknown_keys(init, "initial", {"profile", "mass", "center", "sigma"});

  const json* br = r.section("branching");
  std::vector<double> partition;
  r.get(br, "branching", "partition", partition);
  double beta = 1.0;
  r.get(br, "branching", "beta", beta);
  const std::size_t issues_before = issues.size();
  auto rates = named_list(r, br, "branching", "rates");
  const bool rates_ok = issues.size() == issues_before;
  r.unknown_keys(br, "branching", {"partition", "rates", "beta"});
  if (br) {
    BranchingSpec spec;
    spec.partition = partition;
    spec.beta = beta;
    if (!br->contains("rates")) rates.push_back({"constant", {1.0}});
    for (std::size_t i = 0; i < rates.size(); ++i) {
      try {
        spec.rates.push_back(RateFunction::from_name(rates[i].name, rates[i].params));
      } catch (const ConfigError& e) {
        r.fail("branching.rates[" + std::to_string(i) + "].name", e.what());
      }
    }
    if (rates_ok && spec.rates.size() == rates.size()) {
      if (rates.size() != partition.size() + 1) {
        std::ostringstream os;
        os << "need " << partition.size() + 1 << " rate functions for " << partition.size() << " partition points, got "
           << rates.size();
        r.fail("branching.rates", os.str());
      }
    }
    for (std::size_t i = 1; i < partition.size(); ++i)
      if (!(partition[i] > partition[i - 1])) r.fail("branching.partition", "must be strictly increasing");
    if (!(beta >= 0.5 && beta <= 1.0)) r.fail("branching.beta", "must lie in [1/2, 1]");
    c.branching = spec;
  }

  const json* sch = r.section("scheme");
  std::string kind = "explicit", positivity = "moment-matched";
  r.get(sch, "scheme", "kind", kind);
  r.get(sch, "scheme", "blocks", c.blocks);
  r.get(sch, "scheme", "positivity", positivity);
  r.unknown_keys(sch, "scheme", {"kind", "blocks", "positivity"});
  if (kind == "explicit") c.scheme = SchemeKind::explicit_fd;
  else if (kind == "blocked") c.scheme = SchemeKind::blocked;
  else if (kind == "mild") c.scheme = SchemeKind::mild;
  else r.fail("scheme.kind", "unknown scheme '" + kind + "'; registry: explicit blocked mild");
  if (positivity == "moment-matched") c.positivity = Positivity::moment_matched;
  else if (positivity == "clip") c.positivity = Positivity::clip;
  else r.fail("scheme.positivity", "unknown rule '" + positivity + "'; registry: moment-matched clip");

  VerifyOptions& v = rc.verify;
  const json* ver = r.section("verify");
  r.get(ver, "verify", "replicates", v.replicates);
  if (ver && ver->contains("test_functions")) v.test_functions = named_list(r, ver, "verify", "test_functions");
  r.get(ver, "verify", "moment_p", v.moment_p);
  if (ver && ver->contains("qv_reference")) {
    v.has_qv_reference = true;
    r.get(ver, "verify", "qv_reference", v.qv_reference);
  }
  if (ver && ver->contains("hoelder")) {
    const json& h = ver->at("hoelder");
    if (!h.is_object()) {
      r.fail("verify.hoelder", "must be an object");
    } else {
      r.get(&h, "verify.hoelder", "x_lo", v.hoelder_window.x_lo);
      r.get(&h, "verify.hoelder", "x_hi", v.hoelder_window.x_hi);
      r.get(&h, "verify.hoelder", "t_from", v.hoelder_window.t_from);
      r.get(&h, "verify.hoelder", "lags", v.hoelder_window.lags);
      r.get(&h, "verify.hoelder", "p", v.hoelder_p);
      r.get(&h, "verify.hoelder", "control_paths", v.control_paths);
      r.get(&h, "verify.hoelder", "control_steps", v.control_steps);
      r.unknown_keys(&h, "verify.hoelder", {"x_lo", "x_hi", "t_from", "lags", "p", "control_paths", "control_steps"});
      if (!(v.hoelder_window.t_from >= 0.0 && v.hoelder_window.t_from < 1.0))
        r.fail("verify.hoelder.t_from", "must lie in [0, 1)");
      if (!(v.hoelder_window.x_hi > v.hoelder_window.x_lo)) r.fail("verify.hoelder.x_hi", "must exceed x_lo");
    }
  }
  r.get(ver, "verify", "lambdas", v.lambdas);
  r.get(ver, "verify", "paths", v.paths);
  r.get(ver, "verify", "mass_dt", v.mass_dt);
  r.get(ver, "verify", "eps", v.eps);
  r.get(ver, "verify", "k_list", v.k_list);
  r.get(ver, "verify", "endpoint_functions", v.endpoint_functions);
  r.get(ver, "verify", "quadrature_dx", v.quadrature_dx);
  r.get(ver, "verify", "blocks", v.blocks);
  r.get(ver, "verify", "study_replicates", v.study_replicates);
  r.get(ver, "verify", "refine_dx", v.refine_dx);
  r.get(ver, "verify", "refine_horizon", v.refine_horizon);
  r.unknown_keys(ver, "verify",
                 {"replicates", "test_functions", "moment_p", "qv_reference", "hoelder", "lambdas", "paths", "mass_dt",
                  "eps", "k_list", "endpoint_functions", "quadrature_dx", "blocks", "study_replicates", "refine_dx",
                  "refine_horizon"});
  for (std::size_t i = 0; i < v.test_functions.size(); ++i) {
    try {
      (void)testfn::by_name(v.test_functions[i].name, v.test_functions[i].params);
    } catch (const ConfigError& e) {
      r.fail("verify.test_functions[" + std::to_string(i) + "]", e.what());
    }
  }
  for (std::size_t i = 0; i < v.endpoint_functions.size(); ++i) {
    try {
      (void)testfn::endpoint_function(v.endpoint_functions[i]);
    } catch (const ConfigError& e) {
      r.fail("verify.endpoint_functions[" + std::to_string(i) + "]", e.what());
    }
  }
  if (!(v.mass_dt > 0.0)) r.fail("verify.mass_dt", "must be positive");
  if (!(v.moment_p >= 1.0)) r.fail("verify.moment_p", "must be >= 1");

  const json* out = r.section("output");
  r.get(out, "output", "dir", rc.output.dir);
  r.get(out, "output", "format", rc.output.format);
  r.unknown_keys(out, "output", {"dir", "format"});
  if (rc.output.format != "csv" && rc.output.format != "json") r.fail("output.format", "must be csv or json");

  // Field-level checks of the simulation block, then the aggregate validation as a backstop.
  if (!(c.dx > 0.0)) r.fail("grid.dx", "must be positive");
  if (!(c.half_width > 0.0)) r.fail("grid.half_width", "must be positive");
  if (!(c.dt > 0.0)) r.fail("time.dt", "must be positive");
  if (!(c.horizon > 0.0)) r.fail("time.horizon", "must be positive");
  if (c.dx > 0.0 && c.dt > c.dx * c.dx * (1.0 + 1e-12)) {
    std::ostringstream os;
    os.precision(17);
    os << "stability: dt = " << c.dt << " exceeds dx^2 = " << c.dx * c.dx;
    r.fail("time.dt", os.str());
  }
  if (std::find(InitialProfile::registry().begin(), InitialProfile::registry().end(), c.initial.name) ==
      InitialProfile::registry().end()) {
    std::string reg;
    for (const auto& n : InitialProfile::registry()) reg += " " + n;
    r.fail("initial.profile", "unknown profile '" + c.initial.name + "'; registry:" + reg);
  }
  if (issues.empty()) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      std::string path;
      for (const char* p : {"grid", "time", "initial", "branching", "scheme"})
        if (msg.rfind(p, 0) == 0) path = p;
      if (msg.rfind("stability", 0) == 0) path = "time.dt";
      r.fail(path, msg);
    }
  }
  if (!issues.empty()) throw ConfigInvalid(std::move(issues));

  json rates_json = json::array();
  for (const auto& g : c.branching.rates) rates_json.push_back(rate_json(g));
  rc.normalized = {
      {"grid", {{"half_width", c.half_width}, {"dx", c.dx}}},
      {"time", {{"dt", c.dt}, {"horizon", c.horizon}, {"output_every", c.output_every}}},
      {"initial",
       {{"profile", c.initial.name}, {"mass", c.initial.mass}, {"center", c.initial.center}, {"sigma", c.initial.sigma}}},
      {"branching", {{"partition", c.branching.partition}, {"rates", rates_json}, {"beta", c.branching.beta}}},
      {"scheme",
       {{"kind", scheme_name(c.scheme)},
        {"blocks", c.blocks},
        {"positivity", c.positivity == Positivity::clip ? "clip" : "moment-matched"}}},
      {"verify",
       {{"replicates", v.replicates},
        {"test_functions", named_json(v.test_functions)},
        {"moment_p", v.moment_p},
        {"hoelder",
         {{"x_lo", v.hoelder_window.x_lo},
          {"x_hi", v.hoelder_window.x_hi},
          {"t_from", v.hoelder_window.t_from},
          {"lags", v.hoelder_window.lags},
          {"p", v.hoelder_p},
          {"control_paths", v.control_paths},
          {"control_steps", v.control_steps}}},
        {"lambdas", v.lambdas},
        {"paths", v.paths},
        {"mass_dt", v.mass_dt},
        {"eps", v.eps},
        {"k_list", v.k_list},
        {"endpoint_functions", v.endpoint_functions},
        {"quadrature_dx", v.quadrature_dx},
        {"blocks", v.blocks},
        {"study_replicates", v.study_replicates},
        {"refine_dx", v.refine_dx},
        {"refine_horizon", v.refine_horizon}}},
      {"output", {{"dir", rc.output.dir}, {"format", rc.output.format}}}};
  if (v.has_qv_reference) rc.normalized["verify"]["qv_reference"] = v.qv_reference;
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid(std::vector<ConfigIssue>{{"", "cannot open configuration file '" + path + "'"}});
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(std::vector<ConfigIssue>{{"", std::string("JSON parse error: ") + e.what()}});
  }
  return parse_config(doc);
}

std::vector<ConfigIssue> validate_config(const json& doc) {
  try {
    (void)parse_config(doc);
  } catch (const ConfigInvalid& e) {
    return e.issues();
  }
  return {};
}

}  // namespace sbm
