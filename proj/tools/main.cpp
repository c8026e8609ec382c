#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bangbang/errors.hpp"
#include "commands.hpp"

namespace {

enum ExitCode { kOk = 0, kNumerical = 1, kConfig = 2 };

}  // namespace

int main(int argc, char** argv) {
  using namespace bangbang;
  using namespace bangbang::cli;

  CLI::App app{"Robust bang-bang controls: nominal search, needle robustification, tracking"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "experiment JSON")->required();
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  auto* nominal = app.add_subcommand("nominal", "multi-start nominal control search");
  auto* robustify = app.add_subcommand("robustify", "needle insertion and channel search");
  auto* tracking = app.add_subcommand("track", "perturbed run with switching-time corrections");
  auto* sweep = app.add_subcommand("sweep", "C_r versus epsilon_max over robustified controls");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    auto doc_config = load_config(config_path);
    if (seed) {
      doc_config.seed = *seed;
      doc_config.nominal.search.seed = *seed;
      doc_config.document["seed"] = *seed;
    }
    RunContext ctx{out_dir ? *out_dir : doc_config.output_dir, jobs, &std::cerr};
    json result;
    if (nominal->parsed()) result = cmd_nominal(doc_config, ctx);
    if (robustify->parsed()) result = cmd_robustify(doc_config, ctx);
    if (tracking->parsed()) result = cmd_track(doc_config, ctx);
    if (sweep->parsed()) result = cmd_sweep(doc_config, ctx);
    std::cout << result.dump(2) << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NoFeasibleNominal& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const NotConverged& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}
