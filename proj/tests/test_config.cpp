#include <doctest.h>

#include <algorithm>

#include "sbm/config.hpp"

using namespace sbm;
using nlohmann::json;

namespace {

bool has_issue(const std::vector<ConfigIssue>& issues, const std::string& path, const std::string& word) {
  return std::any_of(issues.begin(), issues.end(), [&](const ConfigIssue& i) {
    return i.path == path && i.message.find(word) != std::string::npos;
  });
}

json grid_time(double dx, double dt) { return {{"grid", {{"half_width", 4}, {"dx", dx}}}, {"time", {{"dt", dt}, {"horizon", 0.1}}}}; }

}  // namespace

TEST_CASE("defaults") {
  const auto c = parse_config(json::object());
  CHECK(c.sim.dx == 0.02);
  CHECK(c.sim.dt == 2e-4);
  CHECK(c.sim.branching.n() == 0);
  CHECK(c.verify.replicates == 2000);
  CHECK(c.output.format == "csv");
  CHECK(c.normalized.at("time").at("dt") == 2e-4);
  CHECK(parse_config(c.normalized).normalized == c.normalized);
}

TEST_CASE("stability boundary") {
  const double dx = 0.05;
  CHECK(validate_config(grid_time(dx, dx * dx)).empty());
  const auto issues = validate_config(grid_time(dx, dx * dx * 0.51 * 2));
  CHECK(has_issue(issues, "time.dt", "stability"));
}

TEST_CASE("rate registry in diagnostics") {
  json doc = {{"branching", {{"partition", {0.0}}, {"rates", {{{"name", "constant"}, {"params", {1}}}, {{"name", "logistic"}, {"params", {1}}}}}}}};
  const auto issues = validate_config(doc);
  REQUIRE(issues.size() == 1);
  CHECK(issues.front().path == "branching.rates[1].name");
  for (const auto& name : RateFunction::registry()) CHECK(issues.front().message.find(name) != std::string::npos);
}

TEST_CASE("field-level diagnostics") {
  json doc = {{"grid", {{"dx", -1}}}, {"time", {{"horizon", 1}, {"speed", 3}}}};
  doc["branching"] = {{"partition", {1.0, 0.5}}, {"beta", 0.2}};
  doc["branching"]["rates"] = json::array({{{"name", "constant"}, {"params", {1}}}});
  doc["scheme"] = {{"kind", "implicit"}};
  doc["output"] = {{"format", "xml"}};
  const auto issues = validate_config(doc);
  CHECK(has_issue(issues, "grid.dx", ""));
  CHECK(has_issue(issues, "time.speed", "unknown"));
  CHECK(has_issue(issues, "branching.partition", "increasing"));
  CHECK(has_issue(issues, "branching.beta", ""));
  CHECK(has_issue(issues, "scheme.kind", ""));
  CHECK(has_issue(issues, "output.format", ""));
  CHECK_THROWS_AS(parse_config(doc), ConfigInvalid);

  json params = {{"branching", {{"rates", {{{"name", "constant"}, {"params", {{"c", 1}}}}}}}}};
  const auto p = validate_config(params);
  REQUIRE(p.size() == 1);
  CHECK(p.front().path == "branching.rates[0].params");
}

TEST_CASE("partition coverage") {
  json doc = grid_time(0.05, 1e-3);
  doc["branching"] = {{"partition", {3.5}}, {"rates", {{{"name", "constant"}, {"params", {1}}}, {{"name", "constant"}, {"params", {1}}}}}};
  CHECK_FALSE(validate_config(doc).empty());
  doc["branching"]["partition"] = {0.0};
  CHECK(validate_config(doc).empty());
}

TEST_CASE("verify options") {
  json doc = {{"verify", {{"replicates", 300}, {"test_functions", {{{"name", "gaussian"}, {"params", {0, 1}}}}},
                          {"hoelder", {{"lags", {1, 2, 4, 8}}, {"t_from", 0.25}}}, {"qv_reference", 1.0}}}};
  const auto c = parse_config(doc);
  CHECK(c.verify.replicates == 300);
  CHECK(c.verify.has_qv_reference);
  CHECK(c.verify.hoelder_window.lags.size() == 4);
  CHECK(resolve_test_functions(c.verify.test_functions).front().name == "gaussian");
  CHECK_THROWS_AS(resolve_test_functions({{"wavelet", {}}}), ConfigError);
}
