#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "adnl/kernels.hpp"
#include "adnl/losses.hpp"
#include "adnl/trainer.hpp"
#include "doctest.h"

using namespace adnl;
namespace fs = std::filesystem;

namespace {

// 70 normal / 14 abnormal training patches at 16x16, small network.
const DatasetSplit& tiny_split() {
  static const DatasetSplit split = make_synthetic_patch_dataset(100, 20, false, 4, {16, 0.7, 0.1});
  return split;
}

TrainingConfig tiny_config() {
  TrainingConfig c;
  c.epochs = 2;
  c.batch_size = 16;
  c.latent_dim = 8;
  c.input_shape = {3, 16, 16};
  c.base_channels = 4;
  c.seed = 21;
  c.eval_batch_size = 64;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("adnl_test_trainer_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; }

Tensor fixed_batch(const TrainingConfig& c) {
  const PreparedPartition test("test", tiny_split().test, c.input_shape[0], c.input_shape[1]);
  return test.all().data;
}

}  // namespace

TEST_CASE("config validation and key/value round trip") {
  TrainingConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  TrainingConfig back;
  for (const auto& [k, v] : c.to_key_values()) CHECK(back.set(k, v));
  CHECK(back == c);
  CHECK_FALSE(back.set("epochss", "3"));
  CHECK_THROWS_AS(back.set("negative_mode", "loud"), std::invalid_argument);
  CHECK_THROWS_AS(back.set("epochs", "3x"), std::invalid_argument);

  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.input_shape = {2, 16, 16};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("a positive step lowers the batch loss, a naive negative step raises it") {
  TrainingConfig c = tiny_config();
  c.learning_rate = 1e-4;
  const Tensor x = slice_rows(fixed_batch(c), 0, 8);
  auto recon_error = [&](TrainState& s) { return positive_loss(s.model.decode_train(s.model.encode_train(x)), x).scalar; };

  TrainState a(c);
  const double before = positive_step(a, x, c);
  CHECK(recon_error(a) < before);

  TrainState b(c);
  const double err_before = recon_error(b);
  negative_step(b, x, c);
  CHECK(recon_error(b) > err_before);

  c.negative_mode = NegativeMode::none;
  CHECK_THROWS_AS(negative_step(b, x, c), std::invalid_argument);
}

TEST_CASE("negative steps leave batch-norm running statistics alone by default") {
  TrainingConfig c = tiny_config();
  const Tensor y = slice_rows(fixed_batch(c), 0, 8);
  auto buffers = [](TrainState& s) {
    std::vector<Tensor> out;
    for (Parameter* p : s.model.parameters())
      if (!p->trainable) out.push_back(p->value);
    return out;
  };
  TrainState a(c);
  const auto before = buffers(a);
  REQUIRE_FALSE(before.empty());
  negative_step(a, y, c);
  CHECK(buffers(a) == before);

  c.negative_updates_bn_stats = true;
  TrainState b(c);
  negative_step(b, y, c);
  CHECK_FALSE(buffers(b) == before);
  positive_step(a, y, c);
  CHECK_FALSE(buffers(a) == before);
}

TEST_CASE("an empty epoch leaves parameters unchanged") {
  TrainingConfig c = tiny_config();
  c.negative_mode = NegativeMode::none;
  const PreparedSplit data(tiny_split(), c);
  TrainState s(c);
  const auto before = s.model.snapshot();
  const EpochLog log = train_epoch(s, data, c, EpochPhase::abnormal_only);
  CHECK(log.normal_batches == 0);
  CHECK(log.abnormal_batches == 0);
  CHECK(s.model.snapshot() == before);
  for (Adam* o : s.optimizers()) CHECK(o->steps() == 0);
}

TEST_CASE("interleaved epoch visits every sample once") {
  TrainingConfig c = tiny_config();
  const PreparedSplit data(tiny_split(), c);
  const int n_normal = data.train_normal->size(), n_abnormal = data.train_abnormal->size();
  REQUIRE(n_normal == 70);
  REQUIRE(n_abnormal == 14);
  TrainState s(c);
  const EpochLog log = train_epoch(s, data, c);
  CHECK(log.normal_batches == 5);
  CHECK(log.abnormal_batches == 1);
  // Preparation counts one read per sample; the epoch adds one more each.
  CHECK(s.reads.train_normal == 2 * static_cast<std::size_t>(n_normal));
  CHECK(s.reads.train_abnormal == 2 * static_cast<std::size_t>(n_abnormal));
  CHECK(s.reconstruction_optimizer.steps() == 6);
  CHECK(s.generator_optimizer.steps() == 5);
  CHECK(s.discriminator_optimizer.steps() == 5);
  CHECK(log.negative_loss < 0);
  CHECK(log.positive_loss > 0);
}

TEST_CASE("baseline never reads the abnormal partition") {
  TrainingConfig c = tiny_config();
  c.negative_mode = NegativeMode::none;
  const PreparedSplit data(tiny_split(), c);
  CHECK_FALSE(data.train_abnormal.has_value());
  const TrainResult r = train(tiny_split(), c);
  CHECK(r.state.reads.train_abnormal == 0);
  CHECK(r.state.reads.train_normal > 0);
  for (const auto& row : r.state.log) {
    CHECK(row.abnormal_batches == 0);
    CHECK(row.negative_loss == 0.0);
  }
}

TEST_CASE("sequential schedule runs normal epochs, then negative epochs") {
  TrainingConfig c = tiny_config();
  c.epochs = 1;
  c.phase_schedule = PhaseSchedule::sequential;
  c.negative_epochs = 2;
  CHECK(schedule_length(c) == 3);
  CHECK(phase_for_epoch(c, 0) == EpochPhase::normal_only);
  CHECK(phase_for_epoch(c, 1) == EpochPhase::abnormal_only);
  const TrainResult r = train(tiny_split(), c);
  REQUIRE(r.state.log.size() == 3);
  CHECK((r.state.log[0].normal_batches == 5 && r.state.log[0].abnormal_batches == 0));
  CHECK((r.state.log[1].normal_batches == 0 && r.state.log[1].abnormal_batches == 1));
  CHECK((r.state.log[2].normal_batches == 0 && r.state.log[2].abnormal_batches == 1));

  c.negative_mode = NegativeMode::none;
  CHECK(schedule_length(c) == 1);
}

TEST_CASE("history, best model and determinism") {
  kernels::set_threads(1);
  TrainingConfig c = tiny_config();
  c.epochs = 3;
  TrainResult a = train(tiny_split(), c);
  TrainResult b = train(tiny_split(), c);
  REQUIRE(a.state.auc_history.size() == 3);
  CHECK(a.state.auc_history == b.state.auc_history);
  CHECK(a.state.model.snapshot() == b.state.model.snapshot());
  CHECK(a.state.deterministic);
  for (int e = 0; e < 3; ++e) CHECK(a.state.auc_history[e].first == e);
  double best = -1;
  for (const auto& [e, v] : a.state.auc_history) best = std::max(best, v);
  CHECK(a.state.best.auc == best);
  CHECK(a.validation_report.auc == doctest::Approx(best).epsilon(1e-12));

  c.select_best_by = SelectBestBy::last;
  const TrainResult last = train(tiny_split(), c);
  CHECK(last.state.best.epoch == 2);
  CHECK(last.state.auc_history == a.state.auc_history);

  // The tiny validation set is too coarse to separate seeds by AUC alone.
  c.seed = 22;
  CHECK_FALSE(train(tiny_split(), c).state.model.snapshot() == a.state.model.snapshot());
}

TEST_CASE("checkpoint round trip and bit-identical resume") {
  kernels::set_threads(1);
  const fs::path dir = temp_dir("resume");
  TrainingConfig c = tiny_config();
  c.checkpoint_dir = dir.string();
  TrainingConfig first = c;
  first.epochs = 1;
  TrainHooks hooks;
  hooks.checkpoint_extra = "[run]\nseed = 21\n";
  TrainResult partial = train(tiny_split(), first, hooks);
  const fs::path path = dir / "last.ckpt";
  REQUIRE(fs::exists(path));

  LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.config == first);
  CHECK(loaded.extra == hooks.checkpoint_extra);
  CHECK(loaded.state.epoch == 1);
  CHECK(loaded.state.auc_history == partial.state.auc_history);
  CHECK(loaded.state.best.epoch == partial.state.best.epoch);
  CHECK(loaded.state.model.snapshot() == partial.state.model.snapshot());
  CHECK(loaded.state.reconstruction_optimizer.steps() == partial.state.reconstruction_optimizer.steps());

  const Tensor x = fixed_batch(c);
  const auto s1 = anomaly_score(partial.state.model, x), s2 = anomaly_score(loaded.state.model, x);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(std::abs(s1[i] - s2[i]) <= 1e-12);

  // One more epoch from the checkpoint matches two uninterrupted epochs.
  c.checkpoint_dir.clear();
  TrainResult full = train(tiny_split(), c);
  const PreparedSplit data(tiny_split(), c);
  resume_training(loaded.state, data, c);
  CHECK(loaded.state.auc_history == full.state.auc_history);
  CHECK(loaded.state.model.snapshot() == full.state.model.snapshot());
  fs::remove_all(dir);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const fs::path dir = temp_dir("corrupt");
  TrainingConfig c = tiny_config();
  c.epochs = 1;
  TrainState s(c);
  save_checkpoint(s, c, dir / "good.ckpt");
  const std::string bytes = slurp(dir / "good.ckpt");
  REQUIRE(bytes.rfind(kCheckpointMagic, 0) == 0);
  CHECK_NOTHROW(load_checkpoint(dir / "good.ckpt"));

  std::string bad = bytes;
  bad[0] = 'X';
  dump(dir / "magic.ckpt", bad);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CheckpointVersionError);

  dump(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), CheckpointChecksumError);

  bad = bytes;
  bad[bytes.size() / 2] ^= 0x40;
  dump(dir / "flip.ckpt", bad);
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), CheckpointChecksumError);

  dump(dir / "tiny.ckpt", "ADN");
  CHECK_THROWS_AS(load_checkpoint(dir / "tiny.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("non-finite losses abort with their position") {
  TrainingConfig c = tiny_config();
  const PreparedSplit data(tiny_split(), c);
  TrainState s(c);
  for (Parameter* p : s.model.decoder_parameters())
    if (p->name == "decoder.fc.weight") p->value[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train_epoch(s, data, c);
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 0") != std::string::npos);
    CHECK(what.find("batch 0") != std::string::npos);
    CHECK(what.find("loss") != std::string::npos);
  }
}

TEST_CASE("training log format") {
  std::ostringstream out;
  write_training_log_header(out);
  EpochLog row;
  row.epoch = 3;
  row.positive_loss = 0.25;
  row.negative_loss = -0.5;
  row.discriminator_loss = 1.25;
  row.generator_loss = 0.75;
  row.validation_auc = 0.875;
  write_training_log_row(out, row);
  CHECK(out.str() ==
        "epoch,positive_loss,negative_loss,discriminator_loss,generator_loss,validation_auc\n"
        "3,0.25,-0.5,1.25,0.75,0.875\n");
}
