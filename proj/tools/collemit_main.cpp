// Command-line driver: collemit <experiment> --config <file> [options]

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "collemit/config.hpp"
#include "collemit/error.hpp"
#include "collemit/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> realizations;
  std::string out = "out";
  std::size_t threads = 1;
  std::optional<std::size_t> replay;
  bool quiet = false;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file")->required();
  cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
  cmd->add_option("--realizations", f.realizations,
                  "number of random clouds (overrides the config)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--threads", f.threads, "worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--replay", f.replay,
                  "run only this realization index, with its original seed");
  cmd->add_flag("-q,--quiet", f.quiet, "no progress output");
}

void print_summary(const nlohmann::json& summary) {
  std::cout << fmt::format("experiment {} (config {}, seed {}, {} realizations)\n",
                           summary["experiment"].get<std::string>(),
                           summary["config_hash"].get<std::string>(),
                           summary["master_seed"].get<std::uint64_t>(),
                           summary["realizations"].get<std::size_t>());
  for (const auto& item : summary["metrics"].items())
    std::cout << fmt::format("  {:<28} {}\n", item.key(), item.value().dump());
  if (summary.contains("points")) {
    for (const auto& p : summary["points"]) {
      std::cout << fmt::format("  point {} = {}\n", p["dir"].get<std::string>(),
                               p["value"].dump());
      for (const auto& item : p["metrics"].items())
        std::cout << fmt::format("    {:<26} {}\n", item.key(), item.value().dump());
    }
  }
  if (summary.contains("notes"))
    for (const auto& n : summary["notes"])
      std::cout << "  note: " << n.get<std::string>() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collective emission of cold atomic ensembles"};
  app.require_subcommand(1);
  Flags flags;
  for (const char* name : {"decay", "spectrum", "angular", "raman", "sweep"}) {
    auto* cmd = app.add_subcommand(name);
    add_flags(cmd, flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : kExitConfig;
  }

  const auto* cmd = app.get_subcommands().front();
  try {
    auto config = collemit::load_config(flags.config);
    config.experiment = collemit::parse_experiment(cmd->get_name());
    if (flags.seed) config.master_seed = *flags.seed;
    if (flags.realizations) config.realizations = *flags.realizations;
    if (flags.replay && *flags.replay >= config.realizations)
      throw collemit::ConfigError(fmt::format(
          "--replay: index {} outside [0, {})", *flags.replay, config.realizations));
    config.validate();

    collemit::RunOptions options;
    options.out_dir = flags.out;
    options.threads = flags.threads;
    options.replay_index = flags.replay;
    options.log = flags.quiet ? nullptr : &std::cerr;
    const auto result = collemit::run(config, options);
    print_summary(result.summary);
    return 0;
  } catch (const collemit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const collemit::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
