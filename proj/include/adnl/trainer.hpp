#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adnl/datasets.hpp"
#include "adnl/eval.hpp"
#include "adnl/model.hpp"
#include "adnl/optimizer.hpp"
#include "adnl/rng.hpp"

namespace adnl {

// none is the unsupervised baseline: the abnormal partition is never read.
enum class NegativeMode { none, naive, scaled };
// interleaved: abnormal batches are spread through every epoch.
// sequential: normal-only epochs first, then abnormal-only epochs.
enum class PhaseSchedule { interleaved, sequential };
enum class SelectBestBy { val_auc, last };

std::string to_string(NegativeMode m);
std::string to_string(PhaseSchedule s);
std::string to_string(SelectBestBy s);

struct TrainingConfig {
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  NegativeMode negative_mode = NegativeMode::naive;
  double negative_weight = 1.0;
  PhaseSchedule phase_schedule = PhaseSchedule::interleaved;
  int negative_epochs = 1;  // sequential schedule only
  // Off: negative steps use batch statistics but leave the batch-norm running
  // averages alone.
  bool negative_updates_bn_stats = false;
  double grad_clip_norm = 5.0;
  double adversarial_weight = 1.0;
  int latent_dim = 128;
  Shape input_shape{3, 64, 64};
  int base_channels = 64;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // empty: no checkpoints
  SelectBestBy select_best_by = SelectBestBy::val_auc;
  int eval_batch_size = 256;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  ModelOptions model_options() const;
  // Flat key/value form shared by config files and checkpoints.
  std::map<std::string, std::string> to_key_values() const;
  // Returns false for an unknown key; throws on a malformed value.
  bool set(const std::string& key, const std::string& value);

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct EpochLog {
  int epoch = 0;
  double positive_loss = 0.0;
  double negative_loss = 0.0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
  double validation_auc = 0.0;
  int normal_batches = 0;
  int abnormal_batches = 0;
};

// Samples handed out per training partition; the baseline must leave
// train_abnormal at zero.
struct DataAccessLog {
  std::size_t train_normal = 0;
  std::size_t train_abnormal = 0;
  std::size_t validation = 0;
};

struct BestModel {
  int epoch = -1;
  double auc = -std::numeric_limits<double>::infinity();
  ParameterSnapshot params;
};

struct TrainState {
  explicit TrainState(const TrainingConfig& config);

  AdversarialAutoencoder model;
  Adam reconstruction_optimizer;  // encoder + decoder: positive and negative steps
  Adam generator_optimizer;       // encoder against the discriminator
  Adam discriminator_optimizer;
  int epoch = 0;  // completed epochs
  Rng rng;
  std::vector<std::pair<int, double>> auc_history;
  BestModel best;
  std::vector<EpochLog> log;
  DataAccessLog reads;
  bool deterministic = true;  // every epoch ran single-threaded

  std::vector<Adam*> optimizers() {
    return {&reconstruction_optimizer, &generator_optimizer, &discriminator_optimizer};
  }
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EpochPhase { both, normal_only, abnormal_only };

// Training partitions preprocessed to the model input shape. The abnormal
// partition is only prepared when the mode uses it.
struct PreparedSplit {
  PreparedSplit(const DatasetSplit& split, const TrainingConfig& config);

  std::optional<PreparedPartition> train_normal;
  std::optional<PreparedPartition> train_abnormal;
  std::optional<PreparedPartition> validation;
};

// One pass over the partitions. Normal batch: reconstruction step, then a
// discriminator step and an encoder (generator) step. Abnormal batch: one
// descent step on the selected negative loss. Does not touch auc_history.
EpochLog train_epoch(TrainState& state, const PreparedSplit& data, const TrainingConfig& config,
                     EpochPhase phase = EpochPhase::both);

// The single updates train_epoch is built from. Each returns its batch loss
// measured before the update.
double positive_step(TrainState& state, const Tensor& batch, const TrainingConfig& config);
double negative_step(TrainState& state, const Tensor& batch, const TrainingConfig& config);

struct TrainResult {
  TrainState state;
  EvalReport validation_report;  // for the selected (best or last) parameters
};

struct TrainHooks {
  std::function<void(const EpochLog&, const TrainState&)> on_epoch;
  // Stored in every checkpoint written to config.checkpoint_dir.
  std::string checkpoint_extra;
};

// Runs the schedule, tracking validation AUC after every epoch. With a
// checkpoint_dir, last.ckpt is rewritten after each epoch.
TrainResult train(const DatasetSplit& split, const TrainingConfig& config, const TrainHooks& hooks = {});
// Continues an existing state up to the configured schedule length.
void resume_training(TrainState& state, const PreparedSplit& data, const TrainingConfig& config,
                     const TrainHooks& hooks = {});
int schedule_length(const TrainingConfig& config);
EpochPhase phase_for_epoch(const TrainingConfig& config, int epoch);

// Loads the selected parameters into state.model.
void select_model(TrainState& state, const TrainingConfig& config);

// --- checkpoints -------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr char kCheckpointMagic[] = "ADNL1";

struct LoadedCheckpoint {
  TrainingConfig config;
  TrainState state;
  std::string extra;  // caller-defined text block (the experiment config)
};

// Layout: "ADNL1" | config block | extra block | epoch, rng, history, best,
// access log | named float32 arrays | optimizer moments | CRC32 of all
// preceding bytes. Integers and floats are little-endian.
void save_checkpoint(const TrainState& state, const TrainingConfig& config, const std::filesystem::path& path,
                     const std::string& extra = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

void write_training_log_header(std::ostream& out);
void write_training_log_row(std::ostream& out, const EpochLog& row);

}  // namespace adnl
