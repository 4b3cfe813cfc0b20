#include "hdnet/metrics.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "hdnet/error.hpp"
#include "hdnet/stream_io.hpp"

namespace hdnet {

namespace {
constexpr const char* kModule = "metrics";
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < classes; ++p) n += at(c, p);
  return n;
}

std::size_t ConfusionMatrix::predicted(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < classes; ++t) n += at(t, c);
  return n;
}

MetricReport metrics_from_confusion(const ConfusionMatrix& confusion) {
  MetricReport report;
  report.confusion = confusion;
  const std::size_t total = confusion.total();
  if (total == 0) return report;

  std::size_t correct = 0;
  std::size_t active = 0;
  double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
  for (std::size_t c = 0; c < confusion.classes; ++c) {
    const std::size_t hits = confusion.at(c, c);
    const std::size_t support = confusion.support(c);
    const std::size_t predicted = confusion.predicted(c);
    correct += hits;
    if (support == 0 && predicted == 0) continue;
    ++active;
    const double precision = predicted ? static_cast<double>(hits) / static_cast<double>(predicted) : 0.0;
    const double recall = support ? static_cast<double>(hits) / static_cast<double>(support) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    precision_sum += precision;
    recall_sum += recall;
    f1_sum += f1;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  report.precision = precision_sum / static_cast<double>(active);
  report.recall = recall_sum / static_cast<double>(active);
  report.f1 = f1_sum / static_cast<double>(active);
  return report;
}

MetricReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                             std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw DataError(kModule, "truth and prediction lengths differ");
  }
  ConfusionMatrix confusion(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) >= classes) {
      throw DataError(kModule, "label out of range at position " + std::to_string(i));
    }
    ++confusion.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
  }
  return metrics_from_confusion(confusion);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return out;
}

FoldSummary summarize_folds(std::vector<MetricReport> folds) {
  FoldSummary summary;
  std::vector<double> acc, prec, rec, f1;
  for (const auto& f : folds) {
    acc.push_back(f.accuracy);
    prec.push_back(f.precision);
    rec.push_back(f.recall);
    f1.push_back(f.f1);
  }
  summary.accuracy = mean_std(acc);
  summary.precision = mean_std(prec);
  summary.recall = mean_std(rec);
  summary.f1 = mean_std(f1);
  summary.folds = std::move(folds);
  return summary;
}

void write_metrics_csv(std::ostream& out, const MetricReport& report) {
  out << "metric,value\n"
      << "accuracy," << format_double(report.accuracy) << '\n'
      << "precision," << format_double(report.precision) << '\n'
      << "recall," << format_double(report.recall) << '\n'
      << "f1," << format_double(report.f1) << '\n'
      << "samples," << report.confusion.total() << '\n';
}

void write_fold_csv(std::ostream& out, const FoldSummary& summary) {
  out << "fold,accuracy,precision,recall,f1\n";
  for (std::size_t i = 0; i < summary.folds.size(); ++i) {
    const auto& f = summary.folds[i];
    out << i << ',' << format_double(f.accuracy) << ',' << format_double(f.precision) << ','
        << format_double(f.recall) << ',' << format_double(f.f1) << '\n';
  }
  out << "mean," << format_double(summary.accuracy.mean) << ',' << format_double(summary.precision.mean)
      << ',' << format_double(summary.recall.mean) << ',' << format_double(summary.f1.mean) << '\n';
  out << "std," << format_double(summary.accuracy.stddev) << ','
      << format_double(summary.precision.stddev) << ',' << format_double(summary.recall.stddev) << ','
      << format_double(summary.f1.stddev) << '\n';
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion) {
  out << "truth";
  for (std::size_t c = 0; c < confusion.classes; ++c) out << ",pred" << c;
  out << '\n';
  for (std::size_t t = 0; t < confusion.classes; ++t) {
    out << t;
    for (std::size_t p = 0; p < confusion.classes; ++p) out << ',' << confusion.at(t, p);
    out << '\n';
  }
}

}  // namespace hdnet
