#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "adnl/trainer.hpp"

namespace adnl {

enum class DataSource { mnist, synthetic };
enum class Profile { desk, full };

std::string to_string(DataSource s);
std::string to_string(Profile p);
Profile parse_profile(const std::string& text);

// Raised for unknown keys and malformed values; the message names the key
// as "section.key".
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One experiment, stored as a sectioned INI file:
//
//   [run]      output_dir, seed, profile
//   [dataset]  source, mnist_images, mnist_labels, anomaly_digit,
//              abnormal_ratio, train_fraction, validation_fraction,
//              synthetic_normal, synthetic_abnormal, synthetic_oversize,
//              synthetic_render_size, image_channels, image_size
//   [model]    latent_dim, base_channels
//   [training] every TrainingConfig key except latent_dim, input_shape,
//              base_channels and seed, which come from the sections above
//   [eval]     n_bins, plots
//
// Precedence: built-in defaults < profile < file keys < command-line flags.
struct ExperimentConfig {
  std::string output_dir = "runs/adnl";
  std::uint64_t seed = 0;
  Profile profile = Profile::desk;

  DataSource source = DataSource::mnist;
  std::string mnist_images;
  std::string mnist_labels;
  int anomaly_digit = 0;
  double abnormal_ratio = 0.1;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  int synthetic_normal = 2000;
  int synthetic_abnormal = 200;
  bool synthetic_oversize = false;
  int synthetic_render_size = 64;
  int image_channels = 1;
  int image_size = 32;

  int latent_dim = 128;
  int base_channels = 64;

  TrainingConfig training;

  int n_bins = 50;
  bool plots = true;

  // The trainer's view: training keys plus model shape and seed.
  TrainingConfig resolved_training() const;
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Defaults with a profile applied. desk: 20 epochs, batch 128, 1x32x32 for
// MNIST and 3x32x32 for synthetic patches. full: 100 epochs, batch 256, 3x64x64.
ExperimentConfig default_config(Profile profile, DataSource source = DataSource::mnist);

// The profile comes from profile_override, else [run] profile, else desk.
ExperimentConfig parse_config(const std::string& text, std::optional<Profile> profile_override = {});
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<Profile> profile_override = {});
// Every key, defaults included.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace adnl
