#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "wcontract/config.hpp"
#include "wcontract/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein contraction toolkit"};
  app.set_version_flag("--version", wcontract::tool_version());
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  for (const auto& name : wcontract::operation_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " operation");
    sub->add_option("--config", config, "INI experiment file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "master seed (overrides numeric.seed)");
    sub->add_option("--threads", threads, "worker threads; falls back to TOOL_THREADS")
        ->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : wcontract::exit_config;
  }

  auto* sub = app.get_subcommands().front();
  std::optional<std::string> out_opt;
  std::optional<std::uint64_t> seed_opt;
  if (sub->count("--out")) out_opt = out;
  if (sub->count("--seed")) seed_opt = seed;

  auto report = wcontract::run_command(sub->get_name(), config, out_opt, seed_opt, threads, std::cerr);
  if (!report.summary.empty()) std::cout << sub->get_name() << ": " << report.summary << "\n";
  for (const auto& f : report.files) std::cout << "  wrote " << f << "\n";
  std::cerr << "elapsed " << report.wall_time_s << " s\n";
  return report.exit_code;
}
