#include "adnl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "adnl/losses.hpp"

namespace adnl {
namespace {

void require_both_labels(std::span<const ScoreRecord> records, const char* what) {
  bool normal = false, abnormal = false;
  for (const auto& r : records) (r.label == Label::normal ? normal : abnormal) = true;
  if (!normal || !abnormal) {
    throw SingleClassError(std::string(what) + " needs at least one normal and one abnormal record");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::size_t EvalReport::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [label](const ScoreRecord& r) { return r.label == label; }));
}

std::vector<double> anomaly_score(const AdversarialAutoencoder& model, const Tensor& batch) {
  const Tensor recon = model.reconstruct(batch);
  return positive_loss(recon, batch).per_sample;
}

std::vector<double> normalize_scores(std::span<const double> raw_errors) {
  if (raw_errors.empty()) throw std::invalid_argument("normalize_scores: empty input");
  for (double e : raw_errors) {
    if (!std::isfinite(e)) throw NonFiniteError("normalize_scores: non-finite raw error");
    if (e < 0) throw std::invalid_argument("normalize_scores: negative raw error");
  }
  const auto [lo, hi] = std::minmax_element(raw_errors.begin(), raw_errors.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out(raw_errors.size(), 0.0);
  if (range > 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((raw_errors[i] - min) / range, 0.0, 1.0);
  }
  return out;
}

std::vector<RocPoint> roc_curve(std::span<const ScoreRecord> records) {
  require_both_labels(records, "roc_curve");
  std::vector<const ScoreRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->score > b->score; });

  double positives = 0, negatives = 0;
  for (const auto& r : records) (r.label == Label::abnormal ? positives : negatives) += 1;

  std::vector<RocPoint> roc{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i]->score;
    for (; i < sorted.size() && sorted[i]->score == threshold; ++i) {
      (sorted[i]->label == Label::abnormal ? tp : fp) += 1;
    }
    roc.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives, threshold});
  }
  return roc;
}

double auc(std::span<const ScoreRecord> records) {
  require_both_labels(records, "auc");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });

  // Sum of (1-based, tie-averaged) ranks of the abnormal records, doubled to stay integral.
  std::uint64_t rank_sum_x2 = 0, positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && records[order[j]].score == records[order[i]].score) ++j;
    const std::uint64_t tied_rank_x2 = i + 1 + j;  // (i+1) + j = twice the mean rank of positions i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (records[order[k]].label == Label::abnormal) {
        rank_sum_x2 += tied_rank_x2;
        ++positives;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = records.size() - positives;
  const double u = (static_cast<double>(rank_sum_x2) - static_cast<double>(positives * (positives + 1))) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double trapezoid_area(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  return area;
}

ScoreHistogram score_histogram(std::span<const ScoreRecord> records, int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("score_histogram: n_bins must be >= 1");
  ScoreHistogram h;
  for (int i = 0; i <= n_bins; ++i) h.edges.push_back(static_cast<double>(i) / n_bins);
  h.normal.assign(static_cast<std::size_t>(n_bins), 0);
  h.abnormal.assign(static_cast<std::size_t>(n_bins), 0);
  for (const auto& r : records) {
    const double s = std::clamp(r.score, 0.0, 1.0);
    const auto bin = std::min(static_cast<std::size_t>(s * n_bins), static_cast<std::size_t>(n_bins - 1));
    (r.label == Label::normal ? h.normal : h.abnormal)[bin] += 1;
  }
  return h;
}

double separation_gap(std::span<const ScoreRecord> records) {
  require_both_labels(records, "separation_gap");
  std::vector<double> normal, abnormal;
  for (const auto& r : records) (r.label == Label::normal ? normal : abnormal).push_back(r.score);
  return median(std::move(abnormal)) - median(std::move(normal));
}

EvalReport build_report(std::vector<ScoreRecord> records, int n_bins) {
  require_both_labels(records, "evaluation");
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.source_id < b.source_id; });
  std::vector<double> raw;
  for (const auto& r : records) raw.push_back(r.raw_error);
  const auto scores = normalize_scores(raw);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].score = scores[i];

  EvalReport report;
  report.records = std::move(records);
  report.roc = roc_curve(report.records);
  report.auc = auc(report.records);
  report.separation_gap = separation_gap(report.records);
  report.histogram = score_histogram(report.records, n_bins);
  report.metadata["normalization"] = "min-max over evaluated set";
  return report;
}

EvalReport evaluate(const AdversarialAutoencoder& model, const PreparedPartition& data, int batch_size, int n_bins) {
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  std::vector<ScoreRecord> records;
  records.reserve(static_cast<std::size_t>(data.size()));
  for (int begin = 0; begin < data.size(); begin += batch_size) {
    const int end = std::min(data.size(), begin + batch_size);
    std::vector<std::int64_t> rows;
    for (int r = begin; r < end; ++r) rows.push_back(r);
    const ImageBatch batch = data.gather(rows);
    const auto errors = anomaly_score(model, batch.data);
    for (int k = 0; k < batch.size(); ++k) {
      records.push_back({batch.source_ids[static_cast<std::size_t>(k)], batch.labels[static_cast<std::size_t>(k)],
                         errors[static_cast<std::size_t>(k)], 0.0});
    }
  }
  return build_report(std::move(records), n_bins);
}

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  auto out = open_out(path);
  out << "source_id,label,raw_error,score\n";
  for (const auto& r : records) {
    out << r.source_id << ',' << to_string(r.label) << ',' << format_double(r.raw_error) << ','
        << format_double(r.score) << '\n';
  }
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "source_id,label,raw_error,score") {
    throw std::runtime_error(path.string() + ": missing scores header");
  }
  std::vector<ScoreRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, label, raw, score;
    if (!std::getline(fields, id, ',') || !std::getline(fields, label, ',') || !std::getline(fields, raw, ',') ||
        !std::getline(fields, score)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    }
    out.push_back({std::stoll(id), parse_label(label), std::stod(raw), std::stod(score)});
  }
  return out;
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> roc) {
  auto out = open_out(path);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc) out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
}

void write_histogram_csv(const std::filesystem::path& path, const ScoreHistogram& h) {
  auto out = open_out(path);
  out << "bin_low,bin_high,normal,abnormal\n";
  for (std::size_t i = 0; i < h.normal.size(); ++i) {
    out << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << h.normal[i] << ','
        << h.abnormal[i] << '\n';
  }
}

void write_summary(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_out(path);
  out << "auc = " << format_double(report.auc) << '\n';
  out << "n_normal = " << report.count(Label::normal) << '\n';
  out << "n_abnormal = " << report.count(Label::abnormal) << '\n';
  out << "separation_gap = " << format_double(report.separation_gap) << '\n';
  for (const auto& [key, value] : report.metadata) out << key << " = " << value << '\n';
}

std::map<std::string, std::string> read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report, bool plots) {
  std::filesystem::create_directories(dir);
  write_scores_csv(dir / "scores.csv", report.records);
  write_roc_csv(dir / "roc.csv", report.roc);
  write_histogram_csv(dir / "histogram.csv", report.histogram);
  write_summary(dir / "summary.txt", report);
  if (plots) {
    write_roc_svg(dir / "roc.svg", report.roc, report.auc);
    write_histogram_svg(dir / "histogram.svg", report.histogram);
  }
}

}  // namespace adnl
