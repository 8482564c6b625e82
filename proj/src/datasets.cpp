#include "adnl/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "adnl/rng.hpp"

namespace adnl {

std::string to_string(Label label) { return label == Label::normal ? "normal" : "abnormal"; }

Label parse_label(const std::string& text) {
  if (text == "normal") return Label::normal;
  if (text == "abnormal") return Label::abnormal;
  throw std::invalid_argument("unknown label '" + text + "'");
}

namespace {

std::size_t rounded(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

template <typename Pred>
bool any_label(const std::vector<LabeledSample>& part, Pred pred) {
  return std::any_of(part.begin(), part.end(), pred);
}

bool has_label(const std::vector<LabeledSample>& part, Label label) {
  return any_label(part, [label](const LabeledSample& s) { return s.label == label; });
}

}  // namespace

DatasetSplit make_leave_one_digit_out_split(const std::vector<LabeledSample>& samples, int anomaly_digit,
                                            double train_fraction, double abnormal_ratio, std::uint64_t seed,
                                            double validation_fraction) {
  if (samples.empty()) throw SplitError("no samples to split");
  if (anomaly_digit < 0 || anomaly_digit > 9) throw SplitError("anomaly digit must be in 0..9");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw SplitError("train_fraction must be in (0, 1)");
  if (!(abnormal_ratio >= 0.0 && abnormal_ratio <= 1.0)) throw SplitError("abnormal_ratio must be in [0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw SplitError("validation_fraction must be in [0, 1)");
  }

  std::vector<std::size_t> normal, abnormal;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].class_tag == anomaly_digit ? abnormal : normal).push_back(i);
  }
  if (abnormal.empty()) throw SplitError("anomaly digit " + std::to_string(anomaly_digit) + " absent from samples");
  if (normal.empty()) throw SplitError("no normal samples besides digit " + std::to_string(anomaly_digit));

  Rng rng(mix_seed(seed, 0x5b1));
  portable_shuffle(normal.begin(), normal.end(), rng);
  portable_shuffle(abnormal.begin(), abnormal.end(), rng);

  DatasetSplit split;
  split.descriptor.image_shape = {samples[0].image.channels, samples[0].image.height, samples[0].image.width};
  split.descriptor.provenance = "mnist leave-one-digit-out, anomaly digit " + std::to_string(anomaly_digit);
  split.descriptor.seed = seed;

  auto take = [&](const std::vector<std::size_t>& idx, std::size_t from, std::size_t to, Label label,
                  std::vector<LabeledSample>& into) {
    for (std::size_t k = from; k < to; ++k) {
      LabeledSample s = samples[idx[k]];
      s.label = label;
      into.push_back(std::move(s));
    }
  };

  const std::size_t n_train_normal_side = rounded(train_fraction, normal.size());
  const std::size_t n_train_abnormal_side = rounded(train_fraction, abnormal.size());
  const std::size_t n_val_normal = rounded(validation_fraction, n_train_normal_side);
  const std::size_t n_val_abnormal = rounded(validation_fraction, n_train_abnormal_side);

  take(normal, 0, n_val_normal, Label::normal, split.validation);
  take(abnormal, 0, n_val_abnormal, Label::abnormal, split.validation);
  take(normal, n_val_normal, n_train_normal_side, Label::normal, split.train_normal);

  const std::size_t available = n_train_abnormal_side - n_val_abnormal;
  const std::size_t n_negative = std::min(available, rounded(abnormal_ratio, split.train_normal.size()));
  take(abnormal, n_val_abnormal, n_val_abnormal + n_negative, Label::abnormal, split.train_abnormal);
  for (std::size_t k = n_val_abnormal + n_negative; k < n_train_abnormal_side; ++k) {
    split.held_out.push_back(samples[abnormal[k]].source_id);
  }

  take(normal, n_train_normal_side, normal.size(), Label::normal, split.test);
  take(abnormal, n_train_abnormal_side, abnormal.size(), Label::abnormal, split.test);

  if (abnormal_ratio > 0.0 && split.train_abnormal.empty()) {
    throw SplitError("abnormal_ratio leaves train_abnormal empty");
  }
  validate_split(split);
  return split;
}

DatasetSplit make_synthetic_patch_dataset(int n_normal, int n_abnormal, bool oversize, std::uint64_t seed,
                                          const SyntheticOptions& options) {
  if (n_normal <= 0 || n_abnormal <= 0) throw SplitError("synthetic dataset needs positive sample counts");
  std::vector<LabeledSample> pool = render_synthetic_patches(n_normal, n_abnormal, oversize, seed, options.render_size);

  std::vector<std::size_t> groups[2];
  for (std::size_t i = 0; i < pool.size(); ++i) groups[static_cast<int>(pool[i].label)].push_back(i);
  Rng rng(mix_seed(seed, 0x5b2));

  DatasetSplit split;
  split.descriptor.image_shape = {3, options.render_size, options.render_size};
  split.descriptor.provenance = std::string("synthetic pedestrian patches") + (oversize ? ", oversize crops" : "");
  split.descriptor.seed = seed;
  for (auto& idx : groups) {
    portable_shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_train = rounded(options.train_fraction, idx.size());
    const std::size_t n_val = rounded(options.validation_fraction, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      LabeledSample& s = pool[idx[k]];
      if (k < n_train) {
        (s.label == Label::normal ? split.train_normal : split.train_abnormal).push_back(std::move(s));
      } else if (k < n_train + n_val) {
        split.validation.push_back(std::move(s));
      } else {
        split.test.push_back(std::move(s));
      }
    }
  }
  validate_split(split);
  return split;
}

void validate_split(const DatasetSplit& split) {
  std::set<std::int64_t> seen;
  auto claim = [&seen](std::int64_t id, const char* part) {
    if (!seen.insert(id).second) {
      throw SplitError("source_id " + std::to_string(id) + " appears twice (last in " + part + ")");
    }
  };
  for (const auto& s : split.train_normal) {
    if (s.label != Label::normal) throw SplitError("train_normal holds an abnormal sample");
    claim(s.source_id, "train_normal");
  }
  for (const auto& s : split.train_abnormal) {
    if (s.label != Label::abnormal) throw SplitError("train_abnormal holds a normal sample");
    claim(s.source_id, "train_abnormal");
  }
  for (const auto& s : split.validation) claim(s.source_id, "validation");
  for (const auto& s : split.test) claim(s.source_id, "test");
  for (std::int64_t id : split.held_out) claim(id, "held_out");
  if (split.train_normal.empty()) throw SplitError("train_normal is empty");
  for (auto [part, name] : {std::pair{&split.validation, "validation"}, std::pair{&split.test, "test"}}) {
    if (!has_label(*part, Label::normal) || !has_label(*part, Label::abnormal)) {
      throw SplitError(std::string(name) + " must contain both normal and abnormal samples");
    }
  }
}

void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << "# adnl split manifest\n";
  out << "# provenance: " << split.descriptor.provenance << "\n";
  out << "# image_shape: " << shape_string(split.descriptor.image_shape) << "\n";
  out << "# seed: " << split.descriptor.seed << "\n";
  auto dump = [&out](const char* name, const std::vector<LabeledSample>& part) {
    for (const auto& s : part) out << name << ' ' << s.source_id << '\n';
  };
  dump("train_normal", split.train_normal);
  dump("train_abnormal", split.train_abnormal);
  dump("validation", split.validation);
  dump("test", split.test);
  for (std::int64_t id : split.held_out) out << "held_out " << id << '\n';
  if (!out) throw DatasetError("write error in " + path.string());
}

DatasetSplit read_split_manifest(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read " + path.string());
  std::unordered_map<std::int64_t, const LabeledSample*> by_id;
  for (const auto& s : samples) by_id[s.source_id] = &s;

  DatasetSplit split;
  if (!samples.empty()) {
    split.descriptor.image_shape = {samples[0].image.channels, samples[0].image.height, samples[0].image.width};
  }
  const std::map<std::string, std::vector<LabeledSample>*> parts{{"train_normal", &split.train_normal},
                                                                 {"train_abnormal", &split.train_abnormal},
                                                                 {"validation", &split.validation},
                                                                 {"test", &split.test}};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# provenance: ", 0) == 0) split.descriptor.provenance = line.substr(14);
    if (line.rfind("# seed: ", 0) == 0) split.descriptor.seed = std::stoull(line.substr(8));
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string part;
    std::int64_t id = 0;
    if (!(fields >> part >> id)) throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": bad line");
    if (part == "held_out") {
      split.held_out.push_back(id);
      continue;
    }
    auto it = parts.find(part);
    if (it == parts.end()) throw DatasetError(path.string() + ": unknown partition '" + part + "'");
    auto found = by_id.find(id);
    if (found == by_id.end()) throw DatasetError(path.string() + ": source_id " + std::to_string(id) + " not in pool");
    it->second->push_back(*found->second);
  }
  validate_split(split);
  return split;
}

Tensor preprocess(const LabeledSample& sample, int target_channels, int target_size) {
  if (target_size < 8) throw std::invalid_argument("preprocess: target_size must be >= 8");
  if (target_channels != 1 && target_channels != 3) throw std::invalid_argument("preprocess: channels must be 1 or 3");
  const RawImage& img = sample.image;
  if (img.channels < 1 || img.height < 1 || img.width < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.channels) * img.height * img.width) {
    throw ShapeError("preprocess: malformed raw image");
  }
  const int s = target_size;
  const double sy = static_cast<double>(img.height) / s, sx = static_cast<double>(img.width) / s;

  // Resample each source channel with half-pixel-centred bilinear weights.
  std::vector<float> resized(static_cast<std::size_t>(img.channels) * s * s);
  for (int c = 0; c < img.channels; ++c) {
    const std::uint8_t* plane = img.pixels.data() + static_cast<std::size_t>(c) * img.height * img.width;
    for (int y = 0; y < s; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
      const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, img.height - 1);
      const double wy = fy - y0;
      for (int x = 0; x < s; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
        const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, img.width - 1);
        const double wx = fx - x0;
        const double top = plane[y0 * img.width + x0] * (1 - wx) + plane[y0 * img.width + x1] * wx;
        const double bottom = plane[y1 * img.width + x0] * (1 - wx) + plane[y1 * img.width + x1] * wx;
        const double v = top * (1 - wy) + bottom * wy;
        resized[(static_cast<std::size_t>(c) * s + y) * s + x] = static_cast<float>(v / 127.5 - 1.0);
      }
    }
  }

  const std::size_t plane = static_cast<std::size_t>(s) * s;
  Tensor out({target_channels, s, s});
  if (img.channels == target_channels) {
    std::copy(resized.begin(), resized.end(), out.values().begin());
  } else if (img.channels == 1) {
    for (int c = 0; c < target_channels; ++c) std::copy_n(resized.begin(), plane, out.data() + c * plane);
  } else {
    for (std::size_t i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (int c = 0; c < img.channels; ++c) acc += resized[c * plane + i];
      out[i] = static_cast<float>(acc / img.channels);
    }
  }
  for (float& v : out.values()) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

PreparedPartition::PreparedPartition(std::string name, std::span<const LabeledSample> samples, int channels,
                                     int size)
    : name_(std::move(name)), images_({static_cast<int>(samples.size()), channels, size, size}) {
  const std::size_t per = static_cast<std::size_t>(channels) * size * size;
  labels_.reserve(samples.size());
  ids_.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor img = preprocess(samples[i], channels, size);
    std::copy(img.values().begin(), img.values().end(), images_.data() + i * per);
    labels_.push_back(samples[i].label);
    ids_.push_back(samples[i].source_id);
  }
  reads_ = samples.size();
}

ImageBatch PreparedPartition::gather(std::span<const std::int64_t> rows) const {
  const std::size_t per = images_.stride0();
  Shape shape = images_.shape();
  shape[0] = static_cast<int>(rows.size());
  ImageBatch batch{Tensor(shape), {}, {}};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<std::size_t>(rows[k]);
    std::copy_n(images_.data() + r * per, per, batch.data.data() + k * per);
    batch.labels.push_back(labels_.at(r));
    batch.source_ids.push_back(ids_[r]);
  }
  reads_ += rows.size();
  return batch;
}

ImageBatch PreparedPartition::all() const {
  std::vector<std::int64_t> rows(static_cast<std::size_t>(size()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::int64_t>(i);
  return gather(rows);
}

BatchIterator::BatchIterator(const PreparedPartition& data, int batch_size, std::uint64_t shuffle_seed)
    : data_(&data), batch_size_(batch_size), seed_(shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (data.size() == 0) throw DatasetError("partition '" + data.name() + "' is empty");
}

int BatchIterator::batch_count() const { return (data_->size() + batch_size_ - 1) / batch_size_; }

std::vector<std::int64_t> BatchIterator::order(int epoch) const {
  std::vector<std::int64_t> rows(static_cast<std::size_t>(data_->size()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::int64_t>(i);
  Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch)));
  portable_shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

ImageBatch BatchIterator::batch(const std::vector<std::int64_t>& order, int index) const {
  const std::size_t begin = static_cast<std::size_t>(index) * batch_size_;
  const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size_));
  return data_->gather(std::span<const std::int64_t>(order).subspan(begin, end - begin));
}

std::vector<ImageBatch> BatchIterator::epoch(int epoch) const {
  const auto rows = order(epoch);
  std::vector<ImageBatch> out;
  for (int b = 0; b < batch_count(); ++b) out.push_back(batch(rows, b));
  return out;
}

}  // namespace adnl
