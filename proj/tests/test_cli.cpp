#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bangbang/errors.hpp"
#include "config.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bangbang;
using namespace bangbang::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class Workspace {
 public:
  explicit Workspace(const std::string& name)
      : dir_(fs::temp_directory_path() / ("bangbang_cli_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  const fs::path& dir() const { return dir_; }

  fs::path write_config(const json& doc, const std::string& name = "config.json") const {
    const auto path = dir_ / name;
    std::ofstream(path) << doc.dump(2);
    return path;
  }

  Run run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + BANGBANG_CLI + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

json shipped() {
  std::ifstream in(fs::path(BANGBANG_SOURCE_DIR) / "configs" / "rigid_body.json");
  return json::parse(in);
}

/// Shipped config trimmed to cheap settings.
json light() {
  json doc = shipped();
  doc.erase("$schema");
  doc["robustify"]["needles"] = 1;
  doc["robustify"]["mode"] = "greedy";
  doc["robustify"]["grid_samples"] = 20;
  doc["tracking"]["source"] = "nominal";
  doc["tracking"]["checkpoints"] = 10;
  return doc;
}

std::string args(const fs::path& config, const Workspace& ws, const std::string& command) {
  return "--config \"" + config.string() + "\" --out \"" + (ws.dir() / "out").string() + "\" " + command;
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(config_hash(json::parse(R"({"a":1})")).size() == 16);
  CHECK(config_hash(json::parse(R"({"a":1})")) != config_hash(json::parse(R"({"a":2})")));
}

TEST_CASE("control JSON round trip uses 1-based channels") {
  const auto u = bangbang::testing::rigid_nominal();
  const json doc = control_to_json(u);
  CHECK(doc["events"][0]["channel"] == 3);
  CHECK(control_from_json(doc) == u);
  json bad = doc;
  bad["events"][0]["channel"] = 0;
  CHECK_THROWS_AS(control_from_json(bad), ConfigError);
  bad = doc;
  bad["events"][0]["t"] = 2.0;
  CHECK_THROWS_AS(control_from_json(bad), ConfigError);
}

TEST_CASE("shipped config validates and parses") {
  const auto doc = shipped();
  CHECK(schema_errors(doc, experiment_schema()).empty());
  const auto config = parse_config(doc, BANGBANG_SOURCE_DIR);
  CHECK(config.nominal.control.has_value());
  CHECK(config.nominal.search.structures.size() == 5);
  CHECK(config.sweep.epsilon_grid.size() == 41);
  CHECK(config.robustify.grid_samples == 50);
}

TEST_CASE("schema violations are reported") {
  json doc = light();
  doc["unexpected"] = 1;
  CHECK_FALSE(schema_errors(doc, experiment_schema()).empty());
  doc = light();
  doc["gap"] = "wide";
  CHECK_FALSE(schema_errors(doc, experiment_schema()).empty());
  doc = light();
  doc["robustify"]["mode"] = "random";
  CHECK_FALSE(schema_errors(doc, experiment_schema()).empty());
  doc = light();
  doc.erase("target");
  CHECK_FALSE(schema_errors(doc, experiment_schema()).empty());
  CHECK_THROWS_AS(parse_config(doc, "."), ConfigError);
}

TEST_CASE("missing config exits with code 2 and names the path") {
  Workspace ws("missing");
  const auto r = ws.run("--config does_not_exist.json nominal");
  CHECK(r.code == 2);
  CHECK(r.err.find("does_not_exist.json") != std::string::npos);
}

TEST_CASE("malformed config and command line exit with code 2") {
  Workspace ws("malformed");
  json doc = light();
  doc["gap"] = -1.0;
  const auto config = ws.write_config(doc);
  CHECK(ws.run(args(config, ws, "track")).code == 2);
  std::ofstream(ws.dir() / "broken.json") << "{ not json";
  CHECK(ws.run("--config \"" + (ws.dir() / "broken.json").string() + "\" track").code == 2);
  CHECK(ws.run("--config \"" + config.string() + "\"").code == 2);
  CHECK(ws.run("--config \"" + config.string() + "\" launch").code == 2);
}

TEST_CASE("unreachable target is a numerical failure") {
  Workspace ws("unreachable");
  json doc = light();
  doc["nominal"].erase("control");
  doc["nominal"]["structures"] = json::parse(R"([{"initial_values": [0, 0, 0, 0], "channels": [3]}])");
  doc["nominal"]["starts"] = 2;
  const auto r = ws.run(args(ws.write_config(doc), ws, "nominal"));
  CHECK(r.code == 1);
  CHECK(r.err.find("numerical failure") != std::string::npos);
}

TEST_CASE("track without perturbation reproduces the nominal error") {
  Workspace ws("track");
  json doc = light();
  doc["model"]["perturbation"]["epsilon"] = 0.0;
  const auto config = ws.write_config(doc);
  const auto r = ws.run(args(config, ws, "track"));
  REQUIRE(r.code == 0);
  const json result = json::parse(r.out);
  CHECK(schema_errors(result, result_schema()).empty());
  CHECK(result["command"] == "track");
  CHECK(result["config_hash"] == config_hash(doc));
  const double nominal = result["nominal_error"];
  CHECK(nominal <= 1e-6);
  CHECK(std::abs(result["uncorrected_error"].get<double>() - nominal) <= 1e-9);
  CHECK(std::abs(result["corrected_error"].get<double>() - nominal) <= 1e-9);
  CHECK(result["checkpoints"] == 10);
  CHECK(result["rejected"] == 0);

  const auto log = lines(ws.dir() / "out" / "tracking_log.csv");
  REQUIRE(log.size() == 12);
  CHECK(log[0] == "# config_hash=" + config_hash(doc) + " command=track seed=1");
  CHECK(log[1].rfind("tau,", 0) == 0);
  CHECK(fs::exists(ws.dir() / "out" / "tracking_trajectory.csv"));
  const json summary = json::parse(slurp(ws.dir() / "out" / "tracking_summary.json"));
  CHECK(summary == result);
}

TEST_CASE("seed override is recorded in the provenance") {
  Workspace ws("seed");
  json doc = light();
  doc["model"]["perturbation"]["epsilon"] = 0.0;
  const auto config = ws.write_config(doc);
  const auto r = ws.run(args(config, ws, "track") + " --seed 7");
  REQUIRE(r.code == 0);
  const json result = json::parse(r.out);
  CHECK(result["seed"] == 7);
  doc["seed"] = 7;
  CHECK(result["config_hash"] == config_hash(doc));
  const auto log = lines(ws.dir() / "out" / "tracking_log.csv");
  REQUIRE_FALSE(log.empty());
  CHECK(log[0].find("seed=7") != std::string::npos);
}

TEST_CASE("greedy robustify evaluates one tuple per channel") {
  Workspace ws("greedy");
  const auto config = ws.write_config(light());
  const auto r = ws.run(args(config, ws, "robustify"));
  REQUIRE(r.code == 0);
  const json result = json::parse(r.out);
  CHECK(schema_errors(result, result_schema()).empty());
  CHECK(result["tuples_evaluated"] == 4);
  CHECK(result["channels"].size() == 1);
  CHECK(result["converged"] == true);
  CHECK(result["residual"].get<double>() <= 1e-6);
  const auto table = lines(ws.dir() / "out" / "cost_table.csv");
  REQUIRE(table.size() == 6);
  CHECK(table[0].rfind("# config_hash=", 0) == 0);
  CHECK(table[1] == "tuple,converged,C,C_r,residual");
  for (std::size_t i = 0; i < 4; ++i) CHECK(table[i + 2].rfind(std::to_string(i + 1) + ",", 0) == 0);
  const auto control = control_from_json(result["control"]);
  CHECK(control.event_count() == 5);
}

TEST_CASE("nominal command derives a feasible control") {
  Workspace ws("nominal");
  json doc = light();
  doc["nominal"].erase("control");
  doc["nominal"]["structures"] = json::parse(R"([{"initial_values": [1, 0, 1, 0], "channels": [3, 1, 2]}])");
  doc["nominal"]["starts"] = 4;
  const auto r = ws.run(args(ws.write_config(doc), ws, "nominal"));
  REQUIRE(r.code == 0);
  const json result = json::parse(r.out);
  CHECK(schema_errors(result, result_schema()).empty());
  CHECK(result["converged"] == true);
  const auto end = result["endpoint"].get<std::vector<double>>();
  REQUIRE(end.size() == 3);
  CHECK(std::abs(end[0] - 0.4) + std::abs(end[1] + 0.3) + std::abs(end[2] - 0.4) <= 3e-6);
  CHECK(control_from_json(result["control"]).event_count() == 3);
  const auto traj = lines(ws.dir() / "out" / "nominal_trajectory.csv");
  REQUIRE(traj.size() > 3);
  CHECK(traj[0].find("command=nominal") != std::string::npos);
}
