#include <algorithm>
#include <fstream>
#include <iomanip>

#include "adnl/eval.hpp"

namespace adnl {
namespace {

constexpr double kW = 480, kH = 360, kMargin = 48;

double px(double x) { return kMargin + x * (kW - 2 * kMargin); }
double py(double y) { return kH - kMargin - y * (kH - 2 * kMargin); }

std::ofstream open_svg(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kW - 2 * kMargin << "\" height=\""
      << kH - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  return out;
}

void axis_labels(std::ofstream& out, const char* x, const char* y) {
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\" font-size=\"13\">" << x
      << "</text>\n"
      << "<text x=\"14\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
      << kH / 2 << ")\">" << y << "</text>\n";
}

}  // namespace

void write_roc_svg(const std::filesystem::path& path, std::span<const RocPoint> roc, double auc_value) {
  auto out = open_svg(path);
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
  for (const auto& p : roc) out << px(p.fpr) << ',' << py(p.tpr) << ' ';
  out << "\"/>\n";
  out << "<text x=\"" << px(0.6) << "\" y=\"" << py(0.1) << "\" font-size=\"14\">AUC = " << std::setprecision(4)
      << auc_value << "</text>\n";
  axis_labels(out, "false positive rate", "true positive rate");
  out << "</svg>\n";
}

void write_histogram_svg(const std::filesystem::path& path, const ScoreHistogram& h) {
  auto out = open_svg(path);
  std::size_t peak = 1;
  for (std::size_t i = 0; i < h.normal.size(); ++i) peak = std::max({peak, h.normal[i], h.abnormal[i]});
  const std::size_t bins = h.normal.size();
  for (std::size_t i = 0; i < bins; ++i) {
    const double x0 = px(h.edges[i]), width = px(h.edges[i + 1]) - x0;
    for (auto [counts, colour] : {std::pair{&h.normal, "#2e86c1"}, std::pair{&h.abnormal, "#c0392b"}}) {
      const double frac = static_cast<double>((*counts)[i]) / static_cast<double>(peak);
      out << "<rect x=\"" << x0 << "\" y=\"" << py(frac) << "\" width=\"" << width << "\" height=\""
          << py(0) - py(frac) << "\" fill=\"" << colour << "\" fill-opacity=\"0.5\"/>\n";
    }
  }
  axis_labels(out, "anomaly score (blue normal, red abnormal)", "count");
  out << "</svg>\n";
}

}  // namespace adnl
