#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wcontract/config.hpp"
#include "wcontract/model.hpp"

namespace wcontract {

enum ExitCode : int { exit_ok = 0, exit_internal = 1, exit_config = 2, exit_numerical = 3 };

struct RunReport {
  int exit_code = exit_ok;
  //! Artifact paths written, manifest last.
  std::vector<std::string> files;
  std::string summary;
  std::string error;
  //! Not written to the manifest, which stays byte-identical across runs.
  double wall_time_s = 0;
};

//! Builds the model described by [model]; theta overrides model.theta when set.
DriftModel build_model(const ExperimentConfig& cfg, std::optional<double> theta = std::nullopt);

//! Runs the configured operation and writes its artifacts plus manifest.json
//! into output.dir. Never throws: failures are mapped to exit codes.
RunReport run(const ExperimentConfig& cfg, int threads = 0);

//! CLI entry: loads the config, applies --out/--seed, checks the subcommand
//! against [operation] name, and runs. Diagnostics go to err.
RunReport run_command(const std::string& subcommand, const std::string& config_path,
                      const std::optional<std::string>& out_dir,
                      const std::optional<std::uint64_t>& seed, int threads, std::ostream& err);

std::string tool_version();

}  // namespace wcontract
