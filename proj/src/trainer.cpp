#include "adnl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "adnl/kernels.hpp"
#include "adnl/losses.hpp"
#include "adnl/text.hpp"

namespace adnl {
namespace {

// Stream ids for mix_seed.
constexpr std::uint64_t kInitStream = 0, kStateStream = 1, kNormalOrderStream = 2, kAbnormalOrderStream = 3;
constexpr int kHistogramBins = 20;

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw std::invalid_argument("training config: " + field + " " + why);
}

AdamConfig adam_config(const TrainingConfig& c) {
  return {c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_epsilon};
}

Tensor sample_prior(Rng& rng, int n, int dim) {
  Tensor z({n, dim});
  for (float& v : z.values()) v = static_cast<float>(standard_normal(rng));
  return z;
}

std::vector<double> sigmoid(const Tensor& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
  return p;
}

// Chain d(loss)/d(prob) through the sigmoid.
Tensor logit_grad(std::span<const double> d_prob, std::span<const double> p, double scale) {
  Tensor g({static_cast<int>(p.size()), 1});
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = static_cast<float>(scale * d_prob[i] * p[i] * (1.0 - p[i]));
  return g;
}

class EpochRunner {
 public:
  EpochRunner(TrainState& state, const TrainingConfig& config) : s_(state), c_(config) {}

  void check(double value, const char* loss, int batch) const {
    if (!std::isfinite(value)) {
      throw TrainingDivergedError("non-finite " + std::string(loss) + " at epoch " + std::to_string(s_.epoch) +
                                  ", batch " + std::to_string(batch));
    }
  }

  // Loss functions reject non-finite reconstructions themselves; rethrow with
  // the position in the schedule.
  template <typename F>
  LossValue guarded(const char* loss, int batch, F f) const {
    try {
      return f();
    } catch (const NonFiniteError& e) {
      throw TrainingDivergedError("non-finite " + std::string(loss) + " at epoch " + std::to_string(s_.epoch) +
                                  ", batch " + std::to_string(batch) + " (" + e.what() + ")");
    }
  }

  double positive_step(const Tensor& x, int batch) {
    auto& m = s_.model;
    m.zero_grad();
    const Tensor recon = m.decode_train(m.encode_train(x));
    Tensor grad;
    const double loss = guarded("positive loss", batch, [&] { return positive_loss(recon, x, &grad); }).scalar;
    check(loss, "positive loss", batch);
    m.encoder().backward(m.decoder().backward(grad), false);
    check(s_.reconstruction_optimizer.step(c_.grad_clip_norm), "positive loss gradient", batch);
    return loss;
  }

  double negative_step(const Tensor& y, int batch) {
    auto& m = s_.model;
    m.zero_grad();
    // Running statistics should describe normal data only: inference
    // normalizes every input with them.
    std::vector<std::pair<Parameter*, Tensor>> kept;
    if (!c_.negative_updates_bn_stats)
      for (Parameter* p : m.parameters())
        if (!p->trainable) kept.emplace_back(p, p->value);
    const Tensor recon = m.decode_train(m.encode_train(y));
    for (auto& [p, v] : kept) p->value = std::move(v);
    Tensor grad;
    const double loss = guarded("negative loss", batch, [&] {
                          return c_.negative_mode == NegativeMode::scaled
                                     ? negative_loss_scaled(recon, y, &grad)
                                     : negative_loss_naive(recon, y, c_.negative_weight, &grad);
                        }).scalar;
    check(loss, "negative loss", batch);
    m.encoder().backward(m.decoder().backward(grad), false);
    check(s_.reconstruction_optimizer.step(c_.grad_clip_norm), "negative loss gradient", batch);
    return loss;
  }

  // Discriminator on prior vs encoder codes, then the encoder as generator.
  // The discriminator step leaves the encoder untouched, so one training
  // forward serves both steps.
  std::pair<double, double> adversarial_round(const Tensor& x, int batch) {
    auto& m = s_.model;
    const int n = x.dim(0), dim = m.latent_dim();

    m.zero_grad();
    const Tensor fake_codes = m.encode_train(x);
    const Tensor real_codes = sample_prior(s_.rng, n, dim);
    const auto p = sigmoid(m.discriminator_logits_train(concat_rows(real_codes, fake_codes)));
    const std::span<const double> real(p.data(), static_cast<std::size_t>(n)), fake(p.data() + n, static_cast<std::size_t>(n));
    std::vector<double> d_prob(p.size());
    const auto disc = guarded("discriminator loss", batch, [&] {
      return adversarial_losses<double>(real, fake, std::span(d_prob).first(static_cast<std::size_t>(n)),
                                        std::span(d_prob).subspan(static_cast<std::size_t>(n))).discriminator;
    });
    check(disc.scalar, "discriminator loss", batch);
    m.discriminator().backward(logit_grad(d_prob, p, c_.adversarial_weight), false);
    check(s_.discriminator_optimizer.step(c_.grad_clip_norm), "discriminator loss gradient", batch);

    m.zero_grad();
    const auto q = sigmoid(m.discriminator_logits_train(fake_codes));
    std::vector<double> d_gen(q.size());
    // The generator term only reads `fake`.
    const auto gen = guarded("generator loss", batch, [&] { return adversarial_losses<double>(q, q, {}, {}, d_gen).generator; });
    check(gen.scalar, "generator loss", batch);
    const Tensor dz = m.discriminator().backward(logit_grad(d_gen, q, c_.adversarial_weight), true);
    m.encoder().backward(dz, false);
    check(s_.generator_optimizer.step(c_.grad_clip_norm), "generator loss gradient", batch);
    return {disc.scalar, gen.scalar};
  }

 private:
  TrainState& s_;
  const TrainingConfig& c_;
};

}  // namespace

std::string to_string(NegativeMode m) {
  switch (m) {
    case NegativeMode::none: return "none";
    case NegativeMode::naive: return "naive";
    case NegativeMode::scaled: return "scaled";
  }
  return "?";
}

std::string to_string(PhaseSchedule s) { return s == PhaseSchedule::interleaved ? "interleaved" : "sequential"; }
std::string to_string(SelectBestBy s) { return s == SelectBestBy::val_auc ? "val_auc" : "last"; }

void TrainingConfig::validate() const {
  if (epochs < 1) invalid("epochs", "must be >= 1");
  if (batch_size < 1) invalid("batch_size", "must be >= 1");
  if (!(learning_rate > 0)) invalid("learning_rate", "must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) invalid("adam_beta1", "must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) invalid("adam_beta2", "must be in [0, 1)");
  if (!(adam_epsilon > 0)) invalid("adam_epsilon", "must be > 0");
  if (!(negative_weight > 0)) invalid("negative_weight", "must be > 0");
  if (negative_epochs < 0) invalid("negative_epochs", "must be >= 0");
  if (!(grad_clip_norm >= 0)) invalid("grad_clip_norm", "must be >= 0 (0 disables clipping)");
  if (!(adversarial_weight >= 0)) invalid("adversarial_weight", "must be >= 0");
  if (latent_dim < 1) invalid("latent_dim", "must be >= 1");
  if (input_shape.size() != 3 || (input_shape[0] != 1 && input_shape[0] != 3) || input_shape[1] != input_shape[2]) {
    invalid("input_shape", "must be 1xSxS or 3xSxS, got " + text::format_shape(input_shape));
  }
  if (base_channels < 1) invalid("base_channels", "must be >= 1");
  if (eval_batch_size < 1) invalid("eval_batch_size", "must be >= 1");
}

ModelOptions TrainingConfig::model_options() const {
  ModelOptions o;
  o.latent_dim = latent_dim;
  o.input_shape = input_shape;
  o.base_channels = base_channels;
  return o;
}

std::map<std::string, std::string> TrainingConfig::to_key_values() const {
  using text::format_double;
  return {
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"learning_rate", format_double(learning_rate)},
      {"adam_beta1", format_double(adam_beta1)},
      {"adam_beta2", format_double(adam_beta2)},
      {"adam_epsilon", format_double(adam_epsilon)},
      {"negative_mode", to_string(negative_mode)},
      {"negative_weight", format_double(negative_weight)},
      {"phase_schedule", to_string(phase_schedule)},
      {"negative_epochs", std::to_string(negative_epochs)},
      {"negative_updates_bn_stats", negative_updates_bn_stats ? "true" : "false"},
      {"grad_clip_norm", format_double(grad_clip_norm)},
      {"adversarial_weight", format_double(adversarial_weight)},
      {"latent_dim", std::to_string(latent_dim)},
      {"input_shape", text::format_shape(input_shape)},
      {"base_channels", std::to_string(base_channels)},
      {"seed", std::to_string(seed)},
      {"checkpoint_dir", checkpoint_dir},
      {"select_best_by", to_string(select_best_by)},
      {"eval_batch_size", std::to_string(eval_batch_size)},
  };
}

bool TrainingConfig::set(const std::string& key, const std::string& raw) {
  using namespace text;
  const std::string v = trim(raw);
  if (key == "epochs") epochs = parse_int(v, key);
  else if (key == "batch_size") batch_size = parse_int(v, key);
  else if (key == "learning_rate") learning_rate = parse_double(v, key);
  else if (key == "adam_beta1") adam_beta1 = parse_double(v, key);
  else if (key == "adam_beta2") adam_beta2 = parse_double(v, key);
  else if (key == "adam_epsilon") adam_epsilon = parse_double(v, key);
  else if (key == "negative_mode") {
    if (v == "none") negative_mode = NegativeMode::none;
    else if (v == "naive") negative_mode = NegativeMode::naive;
    else if (v == "scaled") negative_mode = NegativeMode::scaled;
    else throw std::invalid_argument("negative_mode: expected none, naive or scaled, got '" + v + "'");
  } else if (key == "negative_weight") negative_weight = parse_double(v, key);
  else if (key == "phase_schedule") {
    if (v == "interleaved") phase_schedule = PhaseSchedule::interleaved;
    else if (v == "sequential") phase_schedule = PhaseSchedule::sequential;
    else throw std::invalid_argument("phase_schedule: expected interleaved or sequential, got '" + v + "'");
  } else if (key == "negative_epochs") negative_epochs = parse_int(v, key);
  else if (key == "negative_updates_bn_stats") negative_updates_bn_stats = parse_bool(v, key);
  else if (key == "grad_clip_norm") grad_clip_norm = parse_double(v, key);
  else if (key == "adversarial_weight") adversarial_weight = parse_double(v, key);
  else if (key == "latent_dim") latent_dim = parse_int(v, key);
  else if (key == "input_shape") input_shape = parse_shape(v, key);
  else if (key == "base_channels") base_channels = parse_int(v, key);
  else if (key == "seed") seed = parse_u64(v, key);
  else if (key == "checkpoint_dir") checkpoint_dir = v;
  else if (key == "select_best_by") {
    if (v == "val_auc") select_best_by = SelectBestBy::val_auc;
    else if (v == "last") select_best_by = SelectBestBy::last;
    else throw std::invalid_argument("select_best_by: expected val_auc or last, got '" + v + "'");
  } else if (key == "eval_batch_size") eval_batch_size = parse_int(v, key);
  else return false;
  return true;
}

TrainState::TrainState(const TrainingConfig& config)
    : model(AdversarialAutoencoder::init(config.model_options(), mix_seed(config.seed, kInitStream))),
      reconstruction_optimizer("reconstruction",
                               [&] {
                                 auto p = model.encoder_parameters();
                                 auto d = model.decoder_parameters();
                                 p.insert(p.end(), d.begin(), d.end());
                                 return p;
                               }(),
                               adam_config(config)),
      generator_optimizer("generator", model.encoder_parameters(), adam_config(config)),
      discriminator_optimizer("discriminator", model.discriminator_parameters(), adam_config(config)),
      rng(mix_seed(config.seed, kStateStream)) {}

PreparedSplit::PreparedSplit(const DatasetSplit& split, const TrainingConfig& config) {
  const int channels = config.input_shape.at(0), size = config.input_shape.at(1);
  train_normal.emplace("train_normal", split.train_normal, channels, size);
  if (config.negative_mode != NegativeMode::none && !split.train_abnormal.empty()) {
    train_abnormal.emplace("train_abnormal", split.train_abnormal, channels, size);
  }
  if (!split.validation.empty()) validation.emplace("validation", split.validation, channels, size);
}

EpochLog train_epoch(TrainState& state, const PreparedSplit& data, const TrainingConfig& config, EpochPhase phase) {
  EpochRunner run(state, config);
  EpochLog log;
  log.epoch = state.epoch;

  const bool use_normal = phase != EpochPhase::abnormal_only && data.train_normal && data.train_normal->size() > 0;
  const bool use_abnormal = phase != EpochPhase::normal_only && config.negative_mode != NegativeMode::none &&
                            data.train_abnormal && data.train_abnormal->size() > 0;

  std::optional<BatchIterator> normal, abnormal;
  std::vector<std::int64_t> normal_order, abnormal_order;
  int nn = 0, na = 0;
  if (use_normal) {
    normal.emplace(*data.train_normal, config.batch_size, mix_seed(config.seed, kNormalOrderStream));
    normal_order = normal->order(state.epoch);
    nn = normal->batch_count();
  }
  if (use_abnormal) {
    abnormal.emplace(*data.train_abnormal, config.batch_size, mix_seed(config.seed, kAbnormalOrderStream));
    abnormal_order = abnormal->order(state.epoch);
    na = abnormal->batch_count();
  }

  // Interleave: normal batch i sits at (2i+1)/(2nn), abnormal batch j at
  // (2j+1)/(2na); merge by position, normal first on ties.
  int i = 0, j = 0, step = 0;
  while (i < nn || j < na) {
    const bool take_normal =
        j >= na || (i < nn && static_cast<std::int64_t>(2 * i + 1) * na <= static_cast<std::int64_t>(2 * j + 1) * nn);
    if (take_normal) {
      const ImageBatch b = normal->batch(normal_order, i++);
      log.positive_loss += run.positive_step(b.data, step);
      const auto [d, g] = run.adversarial_round(b.data, step);
      log.discriminator_loss += d;
      log.generator_loss += g;
      ++log.normal_batches;
    } else {
      const ImageBatch b = abnormal->batch(abnormal_order, j++);
      log.negative_loss += run.negative_step(b.data, step);
      ++log.abnormal_batches;
    }
    ++step;
  }
  if (log.normal_batches) {
    log.positive_loss /= log.normal_batches;
    log.discriminator_loss /= log.normal_batches;
    log.generator_loss /= log.normal_batches;
  }
  if (log.abnormal_batches) log.negative_loss /= log.abnormal_batches;

  state.deterministic = state.deterministic && kernels::max_threads() == 1;
  state.reads.train_normal = data.train_normal ? data.train_normal->reads() : 0;
  state.reads.train_abnormal = data.train_abnormal ? data.train_abnormal->reads() : 0;
  return log;
}

double positive_step(TrainState& state, const Tensor& batch, const TrainingConfig& config) {
  return EpochRunner(state, config).positive_step(batch, 0);
}

double negative_step(TrainState& state, const Tensor& batch, const TrainingConfig& config) {
  if (config.negative_mode == NegativeMode::none) throw std::invalid_argument("negative_step: negative_mode is none");
  return EpochRunner(state, config).negative_step(batch, 0);
}

int schedule_length(const TrainingConfig& config) {
  const bool negative_phase = config.phase_schedule == PhaseSchedule::sequential && config.negative_mode != NegativeMode::none;
  return config.epochs + (negative_phase ? config.negative_epochs : 0);
}

EpochPhase phase_for_epoch(const TrainingConfig& config, int epoch) {
  if (config.phase_schedule == PhaseSchedule::interleaved) return EpochPhase::both;
  return epoch < config.epochs ? EpochPhase::normal_only : EpochPhase::abnormal_only;
}

void resume_training(TrainState& state, const PreparedSplit& data, const TrainingConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (!data.validation) throw std::invalid_argument("training needs a validation partition");
  const int total = schedule_length(config);
  while (state.epoch < total) {
    EpochLog log = train_epoch(state, data, config, phase_for_epoch(config, state.epoch));
    const EvalReport val = evaluate(state.model, *data.validation, config.eval_batch_size, kHistogramBins);
    log.validation_auc = val.auc;
    state.reads.validation = data.validation->reads();
    state.auc_history.emplace_back(state.epoch, val.auc);
    state.log.push_back(log);
    if (config.select_best_by == SelectBestBy::last || val.auc > state.best.auc) {
      state.best = {state.epoch, val.auc, state.model.snapshot()};
    }
    ++state.epoch;
    if (!config.checkpoint_dir.empty()) {
      std::filesystem::create_directories(config.checkpoint_dir);
      save_checkpoint(state, config, std::filesystem::path(config.checkpoint_dir) / "last.ckpt", hooks.checkpoint_extra);
    }
    if (hooks.on_epoch) hooks.on_epoch(log, state);
  }
}

void select_model(TrainState& state, const TrainingConfig& config) {
  if (config.select_best_by == SelectBestBy::val_auc && !state.best.params.empty()) state.model.restore(state.best.params);
}

TrainResult train(const DatasetSplit& split, const TrainingConfig& config, const TrainHooks& hooks) {
  config.validate();
  const PreparedSplit data(split, config);
  TrainResult result{TrainState(config), {}};
  resume_training(result.state, data, config, hooks);
  // Score validation with the selected parameters without disturbing the
  // final state.
  const ParameterSnapshot final_params = result.state.model.snapshot();
  select_model(result.state, config);
  result.validation_report = evaluate(result.state.model, *data.validation, config.eval_batch_size, kHistogramBins);
  result.state.model.restore(final_params);
  result.state.reads.validation = data.validation->reads();
  return result;
}

void write_training_log_header(std::ostream& out) {
  out << "epoch,positive_loss,negative_loss,discriminator_loss,generator_loss,validation_auc\n";
}

void write_training_log_row(std::ostream& out, const EpochLog& r) {
  using text::format_double;
  out << r.epoch << ',' << format_double(r.positive_loss) << ',' << format_double(r.negative_loss) << ','
      << format_double(r.discriminator_loss) << ',' << format_double(r.generator_loss) << ','
      << format_double(r.validation_auc) << '\n';
}

}  // namespace adnl
