#include <iostream>

#include "CLI11.hpp"
#include "adnl/commands.hpp"

int main(int argc, char** argv) {
  using namespace adnl;
  CLI::App app{"Anomaly detection by negative learning: train, evaluate and sweep adversarial autoencoders"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::string profile;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "Experiment config (INI)")->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "Output directory (overrides run.output_dir)");
    cmd->add_option("--seed", opts.seed, "Seed (overrides run.seed)");
    cmd->add_option("--profile", profile, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--threads", opts.threads, "Worker threads (1 gives bit-reproducible runs)")
        ->check(CLI::PositiveNumber);
  };

  auto* train = app.add_subcommand("train", "Train one model and write checkpoints, logs and reports");
  common(train);
  auto* eval = app.add_subcommand("eval", "Score a partition with a trained checkpoint");
  common(eval);
  eval->add_option("--checkpoint", opts.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--partition", opts.partition, "test, validation, train_normal or train_abnormal");
  auto* sweep = app.add_subcommand("mnist-sweep", "Leave-one-digit-out comparison of baseline and negative learning");
  common(sweep);
  sweep->add_option("--digits", opts.digits, "Subset of anomaly digits (default 0-9)")->check(CLI::Range(0, 9));
  auto* report = app.add_subcommand("report", "Rebuild summary, ROC, histogram and plots from a scores.csv");
  common(report);
  report->add_option("--in", opts.input_dir, "Directory holding scores.csv")->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  if (!profile.empty()) opts.profile = parse_profile(profile);

  try {
    if (train->parsed()) return cmd_train(opts, std::cout);
    if (eval->parsed()) return cmd_eval(opts, std::cout);
    if (sweep->parsed()) return cmd_mnist_sweep(opts, std::cout);
    if (report->parsed()) return cmd_report(opts, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
