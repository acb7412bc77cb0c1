#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbm/solver.hpp"
#include "sbm/test_functions.hpp"
#include "sbm/verify.hpp"

namespace sbm {

struct ConfigIssue {
  std::string path;
  std::string message;
};

/// Validation failure carrying one diagnostic per offending field.
class ConfigInvalid : public ConfigError {
 public:
  explicit ConfigInvalid(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

struct NamedFunction {
  std::string name;
  std::vector<double> params;
};

/// Knobs of the verify, appendix and study subcommands.
struct VerifyOptions {
  std::size_t replicates = 2000;
  std::vector<NamedFunction> test_functions{{"one", {}}};
  double moment_p = 1.0;
  /// Closed-form right side for verify qv; unset means compare against the Monte Carlo compensator.
  bool has_qv_reference = false;
  double qv_reference = 0.0;
  verify::HoelderWindow hoelder_window;
  double hoelder_p = 2.0;
  std::size_t control_paths = 400;
  std::size_t control_steps = 4096;
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  std::size_t paths = 100000;
  double mass_dt = 1e-3;
  std::vector<double> eps{0.0, 1e-3, 1e-2};
  std::vector<int> k_list{4, 8, 16, 32};
  std::vector<std::string> endpoint_functions{"linear", "square"};
  double quadrature_dx = 0.0;
  std::vector<int> blocks{1, 2, 4, 8, 16};
  std::size_t study_replicates = 128;
  std::vector<double> refine_dx{0.1, 0.05, 0.025, 0.0125};
  double refine_horizon = 0.25;
};

struct OutputOptions {
  std::string dir = "out";
  std::string format = "csv";
};

struct RunConfig {
  SimConfig sim;
  VerifyOptions verify;
  OutputOptions output;
  /// Fully resolved configuration, defaults filled in; hashed into the manifest.
  nlohmann::json normalized;
};

/// Parses and validates a configuration document. Throws ConfigInvalid listing every violation
/// with its field path (for example "time.dt" or "branching.rates[1].name").
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// Issues for a document; empty means valid.
std::vector<ConfigIssue> validate_config(const nlohmann::json& doc);

std::vector<testfn::TestFunction> resolve_test_functions(const std::vector<NamedFunction>& specs);

}  // namespace sbm
