#include "adnl/config.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "adnl/text.hpp"

#ifndef ADNL_DATA_DIR
#define ADNL_DATA_DIR "data"
#endif

namespace adnl {
namespace {

namespace pt = boost::property_tree;

// Keys owned by other sections.
bool training_key_allowed(const std::string& key) {
  return key != "latent_dim" && key != "input_shape" && key != "base_channels" && key != "seed";
}

DataSource parse_source(const std::string& v) {
  if (v == "mnist") return DataSource::mnist;
  if (v == "synthetic") return DataSource::synthetic;
  throw std::invalid_argument("expected mnist or synthetic, got '" + v + "'");
}

void set_key(ExperimentConfig& c, const std::string& section, const std::string& key, const std::string& raw) {
  using namespace text;
  const std::string v = trim(raw);
  const std::string name = section + "." + key;
  bool known = true;
  if (section == "run") {
    if (key == "output_dir") c.output_dir = v;
    else if (key == "seed") c.seed = parse_u64(v, name);
    else if (key == "profile") c.profile = parse_profile(v);
    else known = false;
  } else if (section == "dataset") {
    if (key == "source") c.source = parse_source(v);
    else if (key == "mnist_images") c.mnist_images = v;
    else if (key == "mnist_labels") c.mnist_labels = v;
    else if (key == "anomaly_digit") c.anomaly_digit = parse_int(v, name);
    else if (key == "abnormal_ratio") c.abnormal_ratio = parse_double(v, name);
    else if (key == "train_fraction") c.train_fraction = parse_double(v, name);
    else if (key == "validation_fraction") c.validation_fraction = parse_double(v, name);
    else if (key == "synthetic_normal") c.synthetic_normal = parse_int(v, name);
    else if (key == "synthetic_abnormal") c.synthetic_abnormal = parse_int(v, name);
    else if (key == "synthetic_oversize") c.synthetic_oversize = parse_bool(v, name);
    else if (key == "synthetic_render_size") c.synthetic_render_size = parse_int(v, name);
    else if (key == "image_channels") c.image_channels = parse_int(v, name);
    else if (key == "image_size") c.image_size = parse_int(v, name);
    else known = false;
  } else if (section == "model") {
    if (key == "latent_dim") c.latent_dim = parse_int(v, name);
    else if (key == "base_channels") c.base_channels = parse_int(v, name);
    else known = false;
  } else if (section == "training") {
    known = training_key_allowed(key) && c.training.set(key, v);
  } else if (section == "eval") {
    if (key == "n_bins") c.n_bins = parse_int(v, name);
    else if (key == "plots") c.plots = parse_bool(v, name);
    else known = false;
  } else {
    throw ConfigError("unknown config section '" + section + "'");
  }
  if (!known) throw ConfigError("unknown config key '" + name + "'");
}

pt::ptree read_tree(const std::string& text) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

}  // namespace

std::string to_string(DataSource s) { return s == DataSource::mnist ? "mnist" : "synthetic"; }
std::string to_string(Profile p) { return p == Profile::desk ? "desk" : "full"; }

Profile parse_profile(const std::string& text) {
  if (text == "desk") return Profile::desk;
  if (text == "full") return Profile::full;
  throw ConfigError("profile: expected desk or full, got '" + text + "'");
}

ExperimentConfig default_config(Profile profile, DataSource source) {
  ExperimentConfig c;
  c.profile = profile;
  c.source = source;
  c.mnist_images = ADNL_DATA_DIR "/mnist10k-images-idx3-ubyte.gz";
  c.mnist_labels = ADNL_DATA_DIR "/mnist10k-labels-idx1-ubyte.gz";
  if (profile == Profile::desk) {
    c.training.epochs = 20;
    c.training.batch_size = 128;
    c.image_channels = source == DataSource::mnist ? 1 : 3;
    c.image_size = 32;
  } else {
    c.training.epochs = 100;
    c.training.batch_size = 256;
    c.image_channels = 3;
    c.image_size = 64;
  }
  return c;
}

TrainingConfig ExperimentConfig::resolved_training() const {
  TrainingConfig t = training;
  t.latent_dim = latent_dim;
  t.base_channels = base_channels;
  t.input_shape = {image_channels, image_size, image_size};
  t.seed = seed;
  return t;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + " " + why); };
  if (output_dir.empty()) fail("run.output_dir", "must not be empty");
  if (anomaly_digit < 0 || anomaly_digit > 9) fail("dataset.anomaly_digit", "must be in 0..9");
  if (!(abnormal_ratio >= 0)) fail("dataset.abnormal_ratio", "must be >= 0");
  if (!(train_fraction > 0 && train_fraction < 1)) fail("dataset.train_fraction", "must be in (0, 1)");
  if (!(validation_fraction > 0 && validation_fraction < 1)) fail("dataset.validation_fraction", "must be in (0, 1)");
  if (synthetic_normal < 1 || synthetic_abnormal < 1) fail("dataset.synthetic_normal/abnormal", "must be >= 1");
  if (synthetic_render_size < 8) fail("dataset.synthetic_render_size", "must be >= 8");
  if (image_channels != 1 && image_channels != 3) fail("dataset.image_channels", "must be 1 or 3");
  if (image_size < 8 || (image_size & (image_size - 1)) != 0) fail("dataset.image_size", "must be a power of two >= 8");
  if (latent_dim < 1) fail("model.latent_dim", "must be >= 1");
  if (base_channels < 1) fail("model.base_channels", "must be >= 1");
  if (n_bins < 1) fail("eval.n_bins", "must be >= 1");
  try {
    resolved_training().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(const std::string& text, std::optional<Profile> profile_override) {
  const pt::ptree tree = read_tree(text);
  for (const auto& [key, node] : tree) {
    if (node.empty()) throw ConfigError("config key '" + key + "' must sit inside a [section]");
  }

  // Source and profile pick the defaults the remaining keys override.
  DataSource source = DataSource::mnist;
  Profile profile = Profile::desk;
  try {
    if (auto s = tree.get_optional<std::string>("dataset.source")) source = parse_source(text::trim(*s));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("dataset.source: ") + e.what());
  }
  if (auto p = tree.get_optional<std::string>("run.profile")) profile = parse_profile(text::trim(*p));
  if (profile_override) profile = *profile_override;

  ExperimentConfig c = default_config(profile, source);
  for (const auto& [section, keys] : tree) {
    for (const auto& [key, value] : keys) {
      if (!value.empty()) throw ConfigError("config key '" + section + "." + key + "' is nested too deep");
      try {
        set_key(c, section, key, value.data());
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
      }
    }
  }
  c.profile = profile;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<Profile> profile_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), profile_override);
}

std::string serialize_config(const ExperimentConfig& c) {
  using text::format_double;
  std::ostringstream out;
  out << "[run]\n"
      << "output_dir = " << c.output_dir << "\n"
      << "seed = " << c.seed << "\n"
      << "profile = " << to_string(c.profile) << "\n\n"
      << "[dataset]\n"
      << "source = " << to_string(c.source) << "\n"
      << "mnist_images = " << c.mnist_images << "\n"
      << "mnist_labels = " << c.mnist_labels << "\n"
      << "anomaly_digit = " << c.anomaly_digit << "\n"
      << "abnormal_ratio = " << format_double(c.abnormal_ratio) << "\n"
      << "train_fraction = " << format_double(c.train_fraction) << "\n"
      << "validation_fraction = " << format_double(c.validation_fraction) << "\n"
      << "synthetic_normal = " << c.synthetic_normal << "\n"
      << "synthetic_abnormal = " << c.synthetic_abnormal << "\n"
      << "synthetic_oversize = " << (c.synthetic_oversize ? "true" : "false") << "\n"
      << "synthetic_render_size = " << c.synthetic_render_size << "\n"
      << "image_channels = " << c.image_channels << "\n"
      << "image_size = " << c.image_size << "\n\n"
      << "[model]\n"
      << "latent_dim = " << c.latent_dim << "\n"
      << "base_channels = " << c.base_channels << "\n\n"
      << "[training]\n";
  for (const auto& [key, value] : c.training.to_key_values()) {
    if (training_key_allowed(key)) out << key << " = " << value << "\n";
  }
  out << "\n[eval]\n"
      << "n_bins = " << c.n_bins << "\n"
      << "plots = " << (c.plots ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace adnl
