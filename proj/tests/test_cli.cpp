#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "sbm/cli.hpp"
#include "sbm/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scratch {
  fs::path root;
  Scratch() {
    root = fs::temp_directory_path() / ("sbm-cli-test-" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
  std::string file(const std::string& name, const json& doc) const {
    std::ofstream(root / name) << doc.dump();
    return (root / name).string();
  }
  std::string dir(const std::string& name) const { return (root / name).string(); }
};

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int s = sbm::cli::run(args, out, err);
  return {s, out.str(), err.str()};
}

json manifest(const std::string& dir) { return json::parse(std::ifstream(fs::path(dir) / "manifest.json")); }

json small() {
  return {{"grid", {{"half_width", 3}, {"dx", 0.1}}}, {"time", {{"dt", 0.005}, {"horizon", 0.1}, {"output_every", 5}}}};
}

}  // namespace

TEST_CASE("validate") {
  Scratch s;
  CHECK(run({"validate", s.file("ok.json", small())}).status == sbm::cli::ok);
  json bad = small();
  bad["time"]["dt"] = 1.02 * 0.01;
  const auto r = run({"validate", s.file("bad.json", bad)});
  CHECK(r.status == sbm::cli::config_error);
  CHECK(r.err.find("time.dt") != std::string::npos);
  CHECK(r.err.find("stability") != std::string::npos);
  CHECK(run({"validate", s.dir("missing.json")}).status == sbm::cli::config_error);
}

TEST_CASE("simulate is deterministic and writes a manifest") {
  Scratch s;
  const auto cfg = s.file("c.json", small());
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "7", "--out", s.dir("a")}).status == 0);
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "7", "--out", s.dir("b")}).status == 0);
  const auto a = manifest(s.dir("a")), b = manifest(s.dir("b"));
  CHECK(a.at("outputs") == b.at("outputs"));
  CHECK(a.at("config_hash") == b.at("config_hash"));
  for (const char* key : {"tool", "version", "command", "config", "base_seed", "stream_seeds", "started", "finished"})
    CHECK(a.contains(key));

  std::ifstream traj(fs::path(s.dir("a")) / "trajectory.csv");
  std::string first;
  std::getline(traj, first);
  CHECK(first == "# sbm-trajectory v1");
  std::ifstream raw(fs::path(s.dir("a")) / "trajectory.csv", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  CHECK(a.at("outputs")[0].at("sha256") == sbm::sha256_hex(bytes));

  REQUIRE(run({"simulate", "--config", cfg, "--seed", "8", "--out", s.dir("c")}).status == 0);
  CHECK(manifest(s.dir("c")).at("outputs") != a.at("outputs"));

  // Rerunning into an existing directory replaces it and leaves no staging directories behind.
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "7", "--out", s.dir("a")}).status == 0);
  CHECK(manifest(s.dir("a")).at("outputs") == a.at("outputs"));
  for (const auto& e : fs::directory_iterator(s.root)) CHECK(e.path().filename().string().front() != '.');

  REQUIRE(run({"replay", (fs::path(s.dir("a")) / "manifest.json").string(), "--out", s.dir("r")}).status == 0);
  CHECK(manifest(s.dir("r")).at("outputs") == a.at("outputs"));
}

TEST_CASE("seed fallback and formats") {
  Scratch s;
  const auto cfg = s.file("c.json", small());
  ::setenv("SBM_SEED", "4242", 1);
  REQUIRE(run({"simulate-u", "--config", cfg, "--out", s.dir("u")}).status == 0);
  ::unsetenv("SBM_SEED");
  CHECK(manifest(s.dir("u")).at("base_seed") == 4242);
  REQUIRE(run({"simulate", "--config", cfg, "--format", "json", "--out", s.dir("j")}).status == 0);
  CHECK(fs::exists(fs::path(s.dir("j")) / "trajectory.json"));
  CHECK(manifest(s.dir("j")).at("base_seed") == 1);
  CHECK(run({"simulate", "--config", cfg, "--format", "xml", "--out", s.dir("x")}).status == sbm::cli::config_error);
}

TEST_CASE("exit statuses") {
  Scratch s;
  const auto cfg = s.file("c.json", small());
  CHECK(run({"frobnicate"}).status == sbm::cli::config_error);
  CHECK(run({"verify", "mp", "--config", cfg, "--replicates", "10", "--out", s.dir("v")}).status == sbm::cli::config_error);
  CHECK_FALSE(fs::exists(s.dir("v")));
  CHECK(run({"appendix", "hk", "--f", "linear", "--out", s.dir("h1")}).status == sbm::cli::ok);
  CHECK(run({"appendix", "hk", "--f", "square", "--out", s.dir("h2")}).status == sbm::cli::gate_failure);
  CHECK(manifest(s.dir("h2")).at("pass") == false);

  json blowup = small();
  blowup["initial"] = {{"profile", "gaussian"}, {"mass", 1e308}, {"sigma", 0.2}};
  const auto r = run({"simulate", "--config", s.file("inf.json", blowup), "--out", s.dir("n")});
  CHECK(r.status == sbm::cli::numerical_abort);
  CHECK(r.err.find("step") != std::string::npos);
}
