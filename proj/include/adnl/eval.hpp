#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adnl/datasets.hpp"
#include "adnl/model.hpp"

namespace adnl {

struct ScoreRecord {
  std::int64_t source_id = 0;
  Label label = Label::normal;
  double raw_error = 0.0;  // per-sample mean squared reconstruction error
  double score = 0.0;      // raw_error min-max scaled over the evaluated set
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0, 0) origin
};

struct ScoreHistogram {
  std::vector<double> edges;  // n_bins + 1 edges over [0, 1]
  std::vector<std::size_t> normal;
  std::vector<std::size_t> abnormal;
};

struct EvalReport {
  std::vector<ScoreRecord> records;  // ordered by source_id
  std::vector<RocPoint> roc;
  double auc = 0.0;
  double separation_gap = 0.0;
  ScoreHistogram histogram;
  std::map<std::string, std::string> metadata;

  std::size_t count(Label label) const;
};

// Both labels are required wherever a ranking metric is computed.
class SingleClassError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inference-mode reconstruction error per sample.
std::vector<double> anomaly_score(const AdversarialAutoencoder& model, const Tensor& batch);

// (e - min) / (max - min); all-equal input maps to all zeros.
std::vector<double> normalize_scores(std::span<const double> raw_errors);

// Abnormal is the positive class. Thresholds sweep the distinct scores in
// descending order; tied scores share one point.
std::vector<RocPoint> roc_curve(std::span<const ScoreRecord> records);
// Mann-Whitney rank statistic, ties counted half.
double auc(std::span<const ScoreRecord> records);
double trapezoid_area(std::span<const RocPoint> roc);

// Equal-width bins over [0, 1]; the last bin is closed on the right.
ScoreHistogram score_histogram(std::span<const ScoreRecord> records, int n_bins);
// median(abnormal scores) - median(normal scores).
double separation_gap(std::span<const ScoreRecord> records);

// Scores raw errors, normalizes, and assembles every metric.
EvalReport build_report(std::vector<ScoreRecord> records, int n_bins);
EvalReport evaluate(const AdversarialAutoencoder& model, const PreparedPartition& data, int batch_size, int n_bins);

// --- files ------------------------------------------------------------------

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);
void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> roc);
void write_histogram_csv(const std::filesystem::path& path, const ScoreHistogram& histogram);
void write_summary(const std::filesystem::path& path, const EvalReport& report);
std::map<std::string, std::string> read_summary(const std::filesystem::path& path);

// SVG renderings; the CSV files stay the ground truth.
void write_roc_svg(const std::filesystem::path& path, std::span<const RocPoint> roc, double auc);
void write_histogram_svg(const std::filesystem::path& path, const ScoreHistogram& histogram);

// Writes scores.csv, roc.csv, histogram.csv, summary.txt (and SVGs when plots
// is set) into dir.
void write_report(const std::filesystem::path& dir, const EvalReport& report, bool plots);

}  // namespace adnl
