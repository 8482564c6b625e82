#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adnl/tensor.hpp"

namespace adnl {

enum class Label : std::uint8_t { normal = 0, abnormal = 1 };

std::string to_string(Label label);
Label parse_label(const std::string& text);

struct RawImage {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // CHW

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

struct LabeledSample {
  RawImage image;
  Label label = Label::normal;
  std::int64_t source_id = 0;
  std::optional<int> class_tag;  // MNIST digit or synthetic scenario
};

struct DatasetDescriptor {
  Shape image_shape;  // raw (channels, height, width)
  std::string provenance;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  std::vector<LabeledSample> train_normal;
  std::vector<LabeledSample> train_abnormal;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
  // Anomaly-class training-side samples not drawn into train_abnormal.
  std::vector<std::int64_t> held_out;
  DatasetDescriptor descriptor;
};

// ImageBatch: preprocessed [N, C, S, S] values in [-1, 1].
struct ImageBatch {
  Tensor data;
  std::vector<Label> labels;
  std::vector<std::int64_t> source_ids;
  int size() const { return static_cast<int>(labels.size()); }
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxFormatError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class IdxTruncatedError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class IdxCountMismatchError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class SplitError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

// --- IDX container ----------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 2051;
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;

struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

// Reads an unsigned-byte IDX file; gzip-compressed files are read transparently.
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

// One sample per record, 1x28x28, class_tag = digit, source_id = record index.
// Every sample starts out labeled normal.
std::vector<LabeledSample> load_mnist_idx(const std::filesystem::path& images_path,
                                          const std::filesystem::path& labels_path);

// --- splits -----------------------------------------------------------------

// Leave-one-digit-out protocol. Each label group is split train_fraction :
// rest into train side and test; validation_fraction of each train side is
// carved out as validation. The anomaly digit's remaining train side is
// subsampled to abnormal_ratio * |train_normal| negative examples; the rest
// is recorded as held_out and never used.
DatasetSplit make_leave_one_digit_out_split(const std::vector<LabeledSample>& samples, int anomaly_digit,
                                            double train_fraction, double abnormal_ratio, std::uint64_t seed,
                                            double validation_fraction = 0.1);

struct SyntheticOptions {
  int render_size = 64;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
};

// Procedural pedestrian patches, split 7:1:2 per label.
//   normal:   upright walkers, mostly grayscale shirts
//   abnormal: fallen, running, groups, or saturated clothing
// With oversize, each figure sits in a context window 2.5x wider and 1.5x
// taller than its bounding box before rendering at render_size.
DatasetSplit make_synthetic_patch_dataset(int n_normal, int n_abnormal, bool oversize, std::uint64_t seed,
                                          const SyntheticOptions& options = {});
std::vector<LabeledSample> render_synthetic_patches(int n_normal, int n_abnormal, bool oversize,
                                                    std::uint64_t seed, int render_size = 64);

// Throws SplitError if partitions overlap, labels are impure or an
// evaluation partition lacks a label.
void validate_split(const DatasetSplit& split);

// "<partition> <source_id>" per line; held_out ids use partition "held_out".
void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split);
// Rebuilds a split from a manifest and the (already labeled) sample pool.
DatasetSplit read_split_manifest(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);

// --- preprocessing and batching ---------------------------------------------

// Bilinear resize to size x size, grayscale <-> RGB conversion, and the
// linear map byte 0 -> -1, 255 -> +1. Output is (channels, size, size).
Tensor preprocess(const LabeledSample& sample, int target_channels, int target_size);

// A partition preprocessed once. Counts every sample it hands out.
class PreparedPartition {
 public:
  PreparedPartition(std::string name, std::span<const LabeledSample> samples, int channels, int size);

  const std::string& name() const { return name_; }
  int size() const { return static_cast<int>(labels_.size()); }
  const Tensor& images() const { return images_; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<std::int64_t>& source_ids() const { return ids_; }

  ImageBatch gather(std::span<const std::int64_t> rows) const;
  ImageBatch all() const;
  // Samples preprocessed plus samples gathered into batches.
  std::size_t reads() const { return reads_; }

 private:
  std::string name_;
  Tensor images_;
  std::vector<Label> labels_;
  std::vector<std::int64_t> ids_;
  mutable std::size_t reads_ = 0;
};

// Shuffled mini-batches; the order is a function of (shuffle_seed, epoch)
// and the final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const PreparedPartition& data, int batch_size, std::uint64_t shuffle_seed);

  int batch_count() const;
  std::vector<std::int64_t> order(int epoch) const;
  ImageBatch batch(const std::vector<std::int64_t>& order, int index) const;
  std::vector<ImageBatch> epoch(int epoch) const;

 private:
  const PreparedPartition* data_;
  int batch_size_;
  std::uint64_t seed_;
};

}  // namespace adnl
