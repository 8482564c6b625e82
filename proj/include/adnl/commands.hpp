#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "adnl/config.hpp"

namespace adnl {

// Command-line state shared by every subcommand. Unset fields fall back to
// the config file, then to the profile defaults.
struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<Profile> profile;
  std::optional<int> threads;
  // eval
  std::optional<std::filesystem::path> checkpoint;
  std::string partition = "test";
  // report
  std::optional<std::filesystem::path> input_dir;
  // mnist-sweep; empty means all ten digits
  std::vector<int> digits;
};

ExperimentConfig resolve_config(const CommandOptions& options);
// Loads or renders the dataset and applies the configured split.
DatasetSplit build_split(const ExperimentConfig& config);

// Each command returns the process exit status and reports progress on log.
// Errors propagate as exceptions; main turns them into a nonzero exit.
int cmd_train(const CommandOptions& options, std::ostream& log);
int cmd_eval(const CommandOptions& options, std::ostream& log);
int cmd_mnist_sweep(const CommandOptions& options, std::ostream& log);
int cmd_report(const CommandOptions& options, std::ostream& log);

struct SweepRow {
  std::string method;
  std::vector<int> digits;
  std::vector<double> auc;
  double average() const;
};

// "method,<digit>...,avg" with one row per method.
void write_sweep_table(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace adnl
