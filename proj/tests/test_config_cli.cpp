#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "adnl/commands.hpp"
#include "adnl/eval.hpp"
#include "adnl/kernels.hpp"
#include "doctest.h"

using namespace adnl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("adnl_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

// Small synthetic run that trains in about a second.
const char* kTinyConfig = R"([dataset]
source = synthetic
synthetic_normal = 100
synthetic_abnormal = 20
synthetic_render_size = 16
image_size = 16

[model]
latent_dim = 8
base_channels = 4

[training]
epochs = 1
batch_size = 16
)";

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ADNL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("serialize and parse round trip") {
  for (Profile p : {Profile::desk, Profile::full})
    for (DataSource s : {DataSource::mnist, DataSource::synthetic}) {
      ExperimentConfig c = default_config(p, s);
      c.seed = 17;
      c.training.negative_mode = NegativeMode::scaled;
      c.training.learning_rate = 3.3e-4;
      c.abnormal_ratio = 0.15;
      c.plots = false;
      CHECK(parse_config(serialize_config(c)) == c);
    }
}

TEST_CASE("unknown keys and bad values name the key") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("[training]\nepochss = 3\n").find("training.epochss") != std::string::npos);
  CHECK(message("[training]\nepochs = three\n").find("training.epochs") != std::string::npos);
  CHECK(message("[training]\nlatent_dim = 3\n").find("training.latent_dim") != std::string::npos);
  CHECK(message("[bogus]\nx = 1\n").find("bogus") != std::string::npos);
  CHECK(message("[dataset]\nanomaly_digit = 12\n").find("dataset.anomaly_digit") != std::string::npos);
  CHECK(message("[dataset]\nimage_size = 24\n").find("dataset.image_size") != std::string::npos);
  CHECK(message("[training]\nnegative_mode = loud\n").find("negative_mode") != std::string::npos);
}

TEST_CASE("precedence: defaults < profile < file < command line") {
  const ExperimentConfig d = parse_config("");
  CHECK(d == default_config(Profile::desk));
  CHECK(d.training.epochs == 20);
  CHECK(d.image_size == 32);
  CHECK(d.image_channels == 1);

  const ExperimentConfig full = parse_config("[run]\nprofile = full\n");
  CHECK(full.training.epochs == 100);
  CHECK(full.training.batch_size == 256);
  CHECK(full.image_size == 64);

  const std::string text = "[run]\nprofile = full\nseed = 4\n[training]\nepochs = 7\n";
  const ExperimentConfig file = parse_config(text);
  CHECK(file.training.epochs == 7);
  CHECK(file.training.batch_size == 256);
  const ExperimentConfig overridden = parse_config(text, Profile::desk);
  CHECK(overridden.training.epochs == 7);
  CHECK(overridden.training.batch_size == 128);
  CHECK(overridden.profile == Profile::desk);

  const fs::path dir = temp_dir("precedence");
  CommandOptions o;
  o.config = write_file(dir / "c.ini", text);
  o.seed = 99;
  o.out = (dir / "elsewhere").string();
  const ExperimentConfig cli = resolve_config(o);
  CHECK(cli.seed == 99);
  CHECK(cli.output_dir == (dir / "elsewhere").string());
  CHECK(cli.training.epochs == 7);
  fs::remove_all(dir);
}

TEST_CASE("train writes a self-describing run directory; eval is repeatable") {
  kernels::set_threads(1);
  const fs::path dir = temp_dir("train");
  CommandOptions o;
  o.config = write_file(dir / "tiny.ini", kTinyConfig);
  o.out = (dir / "run").string();
  std::ostringstream log;
  REQUIRE(cmd_train(o, log) == 0);
  const fs::path run = dir / "run";
  for (const char* f : {"config.ini", "split.txt", "train_log.csv", "checkpoints/last.ckpt", "validation/summary.txt",
                        "test/scores.csv", "test/roc.csv", "test/histogram.csv", "test/summary.txt", "test/roc.svg"}) {
    CAPTURE(f);
    CHECK(fs::exists(run / f));
  }
  const std::string train_log = slurp(run / "train_log.csv");
  CHECK(train_log.rfind("epoch,positive_loss,negative_loss,discriminator_loss,generator_loss,validation_auc\n", 0) == 0);
  CHECK(std::count(train_log.begin(), train_log.end(), '\n') == 2);

  // The echoed config reproduces the run.
  const ExperimentConfig echoed = load_config(run / "config.ini");
  CHECK(echoed.output_dir == run.string());
  CHECK(echoed.training.epochs == 1);
  CommandOptions again;
  again.config = run / "config.ini";
  again.out = (dir / "rerun").string();
  REQUIRE(cmd_train(again, log) == 0);
  CHECK(slurp(dir / "rerun/test/scores.csv") == slurp(run / "test/scores.csv"));
  CHECK(slurp(dir / "rerun/train_log.csv") == train_log);

  CommandOptions e;
  e.checkpoint = run / "checkpoints/last.ckpt";
  e.out = (dir / "eval1").string();
  REQUIRE(cmd_eval(e, log) == 0);
  e.out = (dir / "eval2").string();
  REQUIRE(cmd_eval(e, log) == 0);
  for (const char* f : {"scores.csv", "roc.csv", "histogram.csv"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "eval1" / f) == slurp(dir / "eval2" / f));
    CHECK(slurp(dir / "eval1" / f) == slurp(run / "test" / f));
  }
  const auto summary = read_summary(dir / "eval1/summary.txt");
  CHECK(summary.at("partition") == "test");
  CHECK(summary.at("auc") == read_summary(run / "test/summary.txt").at("auc"));

  e.partition = "train_normal";
  CHECK_THROWS_AS(cmd_eval(e, log), SingleClassError);
  e.partition = "nonsense";
  CHECK_THROWS_AS(cmd_eval(e, log), std::invalid_argument);

  // report rebuilds the same files from scores.csv and keeps the metadata.
  fs::copy_file(run / "test/scores.csv", dir / "scores.csv");
  fs::copy_file(run / "test/summary.txt", dir / "summary.txt");
  CommandOptions r;
  r.input_dir = dir;
  r.out = (dir / "report").string();
  REQUIRE(cmd_report(r, log) == 0);
  CHECK(slurp(dir / "report/roc.csv") == slurp(run / "test/roc.csv"));
  CHECK(slurp(dir / "report/histogram.csv") == slurp(run / "test/histogram.csv"));
  CHECK(read_summary(dir / "report/summary.txt") == read_summary(run / "test/summary.txt"));
  fs::remove_all(dir);
}

TEST_CASE("sweep table layout") {
  const fs::path dir = temp_dir("table");
  std::vector<int> digits(10);
  for (int d = 0; d < 10; ++d) digits[d] = d;
  SweepRow a{"unsupervised", digits, {}}, b{"negative_learning", digits, {}};
  for (int d = 0; d < 10; ++d) {
    a.auc.push_back(0.4 + 0.02 * d);
    b.auc.push_back(0.99);
  }
  CHECK(a.average() == doctest::Approx(0.49));
  write_sweep_table(dir / "t.csv", {a, b});
  std::istringstream in(slurp(dir / "t.csv"));
  std::string header, row1, row2, extra;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK_FALSE(std::getline(in, extra));
  CHECK(header == "method,0,1,2,3,4,5,6,7,8,9,avg");
  CHECK(row1 == "unsupervised,0.4000,0.4200,0.4400,0.4600,0.4800,0.5000,0.5200,0.5400,0.5600,0.5800,0.4900");
  CHECK(row2.rfind("negative_learning,0.9900,", 0) == 0);
  CHECK(std::count(row2.begin(), row2.end(), ',') == 11);
  fs::remove_all(dir);
}

TEST_CASE("mnist sweep over a digit subset") {
  kernels::set_threads(1);
  const fs::path dir = temp_dir("sweep");
  CommandOptions o;
  o.config = write_file(dir / "s.ini",
                        "[dataset]\nimage_size = 8\n[model]\nlatent_dim = 4\nbase_channels = 2\n"
                        "[training]\nepochs = 1\nbatch_size = 256\n[eval]\nplots = false\n");
  o.out = (dir / "sweep").string();
  o.digits = {1, 6};
  std::ostringstream log;
  REQUIRE(cmd_mnist_sweep(o, log) == 0);
  const std::string table = slurp(dir / "sweep/sweep_auc.csv");
  CHECK(table.rfind("method,1,6,avg\nunsupervised,", 0) == 0);
  CHECK(table.find("\nnegative_learning,") != std::string::npos);
  for (const char* run : {"digit1/baseline", "digit1/nl", "digit6/baseline", "digit6/nl"}) {
    CAPTURE(run);
    CHECK(fs::exists(dir / "sweep" / run / "test/summary.txt"));
  }
  CHECK(read_summary(dir / "sweep/digit6/nl/test/summary.txt").at("negative_mode") == "naive");
  CHECK(read_summary(dir / "sweep/digit6/baseline/test/summary.txt").at("negative_mode") == "none");
  fs::remove_all(dir);
}

TEST_CASE("command-line binary exit status") {
  const fs::path dir = temp_dir("binary");
  write_file(dir / "tiny.ini", kTinyConfig);
  write_file(dir / "bad.ini", "[training]\nepochss = 2\n");
  CHECK(run_cli("train --config " + (dir / "tiny.ini").string() + " --out " + (dir / "run").string() +
                    " --threads 1 --seed 3",
                dir / "ok.log") == 0);
  CHECK(fs::exists(dir / "run/test/summary.txt"));
  CHECK(read_summary(dir / "run/test/summary.txt").at("seed") == "3");
  CHECK(run_cli("train --config " + (dir / "bad.ini").string(), dir / "bad.log") != 0);
  CHECK(slurp(dir / "bad.log").find("training.epochss") != std::string::npos);
  CHECK(run_cli("eval --checkpoint " + (dir / "missing.ckpt").string(), dir / "missing.log") != 0);
  CHECK(run_cli("frobnicate", dir / "unknown.log") != 0);
  CHECK(run_cli("eval --checkpoint " + (dir / "run/checkpoints/last.ckpt").string() + " --partition validation --out " +
                    (dir / "val").string(),
                dir / "eval.log") == 0);
  CHECK(read_summary(dir / "val/summary.txt").at("partition") == "validation");
  fs::remove_all(dir);
}
