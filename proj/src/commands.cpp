#include "adnl/commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "adnl/kernels.hpp"
#include "adnl/text.hpp"

namespace adnl {
namespace fs = std::filesystem;
namespace {

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
  out.close();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void apply_threads(const CommandOptions& o) {
  if (o.threads) kernels::set_threads(*o.threads);
}

const std::vector<LabeledSample>& pick_partition(const DatasetSplit& split, const std::string& name) {
  if (name == "test") return split.test;
  if (name == "validation") return split.validation;
  if (name == "train_normal") return split.train_normal;
  if (name == "train_abnormal") return split.train_abnormal;
  throw std::invalid_argument("unknown partition '" + name + "' (test, validation, train_normal, train_abnormal)");
}

struct RunOutcome {
  double validation_auc = 0.0;
  EvalReport test;
  int best_epoch = -1;
};

// Trains one configuration into dir and scores the test partition with the
// selected parameters.
RunOutcome run_experiment(const ExperimentConfig& config, const DatasetSplit& split, const fs::path& dir,
                          std::ostream& log) {
  fs::create_directories(dir);
  TrainingConfig tc = config.resolved_training();
  if (tc.checkpoint_dir.empty()) tc.checkpoint_dir = (dir / "checkpoints").string();

  ExperimentConfig echoed = config;
  echoed.output_dir = dir.string();
  echoed.training.checkpoint_dir = tc.checkpoint_dir;
  const std::string resolved = serialize_config(echoed);
  write_text(dir / "config.ini", resolved);
  write_split_manifest(dir / "split.txt", split);

  std::ofstream train_log(dir / "train_log.csv");
  if (!train_log) throw std::runtime_error("cannot write " + (dir / "train_log.csv").string());
  write_training_log_header(train_log);

  TrainHooks hooks;
  hooks.checkpoint_extra = resolved;
  const auto start = std::chrono::steady_clock::now();
  hooks.on_epoch = [&](const EpochLog& row, const TrainState&) {
    write_training_log_row(train_log, row);
    train_log.flush();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream line;
    line << "  epoch " << std::setw(3) << row.epoch << "  positive " << std::setprecision(5) << row.positive_loss
         << "  negative " << row.negative_loss << "  disc " << row.discriminator_loss << "  val_auc "
         << std::setprecision(4) << row.validation_auc << "  (" << std::setprecision(1) << std::fixed << secs << "s)";
    log << line.str() << std::endl;
  };
  TrainResult result = train(split, tc, hooks);
  train_log.close();
  if (!train_log) throw std::runtime_error("cannot write " + (dir / "train_log.csv").string());

  result.validation_report.metadata["partition"] = "validation";
  result.validation_report.metadata["seed"] = std::to_string(config.seed);
  result.validation_report.metadata["best_epoch"] = std::to_string(result.state.best.epoch);
  result.validation_report.metadata["checkpoint"] = (fs::path(tc.checkpoint_dir) / "last.ckpt").string();
  write_report(dir / "validation", result.validation_report, config.plots);

  select_model(result.state, tc);
  const int channels = tc.input_shape[0], size = tc.input_shape[1];
  const PreparedPartition test("test", split.test, channels, size);
  RunOutcome out{result.validation_report.auc, evaluate(result.state.model, test, tc.eval_batch_size, config.n_bins),
                 result.state.best.epoch};
  out.test.metadata["partition"] = "test";
  out.test.metadata["seed"] = std::to_string(config.seed);
  out.test.metadata["best_epoch"] = std::to_string(out.best_epoch);
  out.test.metadata["negative_mode"] = to_string(tc.negative_mode);
  out.test.metadata["checkpoint"] = (fs::path(tc.checkpoint_dir) / "last.ckpt").string();
  return out;
}

}  // namespace

ExperimentConfig resolve_config(const CommandOptions& o) {
  ExperimentConfig c = o.config ? load_config(*o.config, o.profile) : default_config(o.profile.value_or(Profile::desk));
  if (o.out) c.output_dir = *o.out;
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

DatasetSplit build_split(const ExperimentConfig& c) {
  if (c.source == DataSource::synthetic) {
    SyntheticOptions so;
    so.render_size = c.synthetic_render_size;
    so.validation_fraction = c.validation_fraction;
    return make_synthetic_patch_dataset(c.synthetic_normal, c.synthetic_abnormal, c.synthetic_oversize, c.seed, so);
  }
  const auto samples = load_mnist_idx(c.mnist_images, c.mnist_labels);
  return make_leave_one_digit_out_split(samples, c.anomaly_digit, c.train_fraction, c.abnormal_ratio, c.seed,
                                        c.validation_fraction);
}

int cmd_train(const CommandOptions& o, std::ostream& log) {
  apply_threads(o);
  const ExperimentConfig config = resolve_config(o);
  log << "# resolved config\n" << serialize_config(config) << std::endl;
  const DatasetSplit split = build_split(config);
  log << "train_normal " << split.train_normal.size() << ", train_abnormal " << split.train_abnormal.size()
      << ", validation " << split.validation.size() << ", test " << split.test.size() << std::endl;
  const fs::path dir = config.output_dir;
  const RunOutcome run = run_experiment(config, split, dir, log);
  write_report(dir / "test", run.test, config.plots);
  log << "validation AUC " << run.validation_auc << ", test AUC " << run.test.auc << " (best epoch "
      << run.best_epoch << ")\n";
  return 0;
}

int cmd_eval(const CommandOptions& o, std::ostream& log) {
  apply_threads(o);
  if (!o.checkpoint) throw std::invalid_argument("eval needs --checkpoint");
  LoadedCheckpoint ckpt = load_checkpoint(*o.checkpoint);
  // Dataset settings: an explicit --config wins over the embedded one.
  ExperimentConfig config;
  if (o.config) {
    config = resolve_config(o);
  } else {
    config = parse_config(ckpt.extra.empty() ? serialize_config(default_config(Profile::desk)) : ckpt.extra);
    if (o.seed) config.seed = *o.seed;
  }
  const TrainingConfig& tc = ckpt.config;
  select_model(ckpt.state, tc);

  const DatasetSplit split = build_split(config);
  const PreparedPartition data(o.partition, pick_partition(split, o.partition), tc.input_shape[0], tc.input_shape[1]);
  EvalReport report = evaluate(ckpt.state.model, data, tc.eval_batch_size, config.n_bins);
  report.metadata["partition"] = o.partition;
  report.metadata["seed"] = std::to_string(config.seed);
  report.metadata["checkpoint"] = o.checkpoint->string();
  report.metadata["checkpoint_epoch"] = std::to_string(ckpt.state.epoch);
  report.metadata["best_epoch"] = std::to_string(ckpt.state.best.epoch);
  report.metadata["negative_mode"] = to_string(tc.negative_mode);

  const fs::path dir = o.out ? fs::path(*o.out) : fs::path(config.output_dir) / ("eval-" + o.partition);
  write_report(dir, report, config.plots);
  log << o.partition << " AUC " << report.auc << " (" << report.count(Label::normal) << " normal, "
      << report.count(Label::abnormal) << " abnormal) -> " << dir.string() << "\n";
  return 0;
}

double SweepRow::average() const {
  return auc.empty() ? 0.0 : std::accumulate(auc.begin(), auc.end(), 0.0) / static_cast<double>(auc.size());
}

void write_sweep_table(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (rows.empty()) throw std::invalid_argument("write_sweep_table: no rows");
  out << "method";
  for (int d : rows.front().digits) out << ',' << d;
  out << ",avg\n";
  for (const auto& row : rows) {
    out << row.method;
    for (double a : row.auc) out << ',' << std::fixed << std::setprecision(4) << a;
    out << ',' << row.average() << '\n';
  }
  out.close();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

int cmd_mnist_sweep(const CommandOptions& o, std::ostream& log) {
  apply_threads(o);
  ExperimentConfig base = resolve_config(o);
  if (base.source != DataSource::mnist) throw std::invalid_argument("mnist-sweep needs dataset.source = mnist");
  const NegativeMode nl_mode =
      base.training.negative_mode == NegativeMode::none ? NegativeMode::naive : base.training.negative_mode;
  std::vector<int> digits = o.digits;
  if (digits.empty()) {
    digits.resize(10);
    std::iota(digits.begin(), digits.end(), 0);
  }

  const fs::path root = base.output_dir;
  fs::create_directories(root);
  const auto samples = load_mnist_idx(base.mnist_images, base.mnist_labels);
  SweepRow baseline{"unsupervised", digits, {}}, nl{"negative_learning", digits, {}};
  for (int digit : digits) {
    ExperimentConfig c = base;
    c.anomaly_digit = digit;
    const DatasetSplit split = make_leave_one_digit_out_split(samples, digit, c.train_fraction, c.abnormal_ratio,
                                                              c.seed, c.validation_fraction);
    for (auto [mode, row] : {std::pair{NegativeMode::none, &baseline}, std::pair{nl_mode, &nl}}) {
      c.training.negative_mode = mode;
      c.training.checkpoint_dir.clear();
      const fs::path dir = root / ("digit" + std::to_string(digit)) / (mode == NegativeMode::none ? "baseline" : "nl");
      log << "digit " << digit << ", negative_mode " << to_string(mode) << std::endl;
      const RunOutcome run = run_experiment(c, split, dir, log);
      write_report(dir / "test", run.test, c.plots);
      row->auc.push_back(run.test.auc);
      log << "digit " << digit << " " << row->method << " test AUC " << run.test.auc << std::endl;
    }
    // Rewritten after every digit so partial sweeps leave a usable table.
    write_sweep_table(root / "sweep_auc.csv", {baseline, nl});
  }
  log << "average test AUC: unsupervised " << baseline.average() << ", negative learning " << nl.average() << "\n";
  return 0;
}

int cmd_report(const CommandOptions& o, std::ostream& log) {
  const fs::path in = o.input_dir ? *o.input_dir : (o.out ? fs::path(*o.out) : fs::path());
  if (in.empty()) throw std::invalid_argument("report needs --in <dir holding scores.csv>");
  const fs::path out = o.out ? fs::path(*o.out) : in;
  int n_bins = 50;
  bool plots = true;
  if (o.config) {
    const ExperimentConfig c = resolve_config(o);
    n_bins = c.n_bins;
    plots = c.plots;
  }
  EvalReport report = build_report(read_scores_csv(in / "scores.csv"), n_bins);
  if (fs::exists(in / "summary.txt")) {
    for (const auto& [k, v] : read_summary(in / "summary.txt")) {
      if (k != "auc" && k != "n_normal" && k != "n_abnormal" && k != "separation_gap") report.metadata[k] = v;
    }
  }
  write_report(out, report, plots);
  log << "AUC " << report.auc << ", separation gap " << report.separation_gap << " -> " << out.string() << "\n";
  return 0;
}

}  // namespace adnl
