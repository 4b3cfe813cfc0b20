#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace hdnet {

/// Row = true class, column = predicted class.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t classes = 0) : classes(classes), counts(classes * classes, 0) {}
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * classes + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * classes + predicted];
  }
  std::size_t total() const;
  std::size_t support(std::size_t c) const;    ///< row sum
  std::size_t predicted(std::size_t c) const;  ///< column sum
};

/// Accuracy plus macro-averaged precision, recall and F1. The macro average
/// runs over classes that occur in the truth or the predictions; a class that
/// is never predicted contributes precision 0.
struct MetricReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionMatrix confusion;
};

MetricReport metrics_from_confusion(const ConfusionMatrix& confusion);
MetricReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                             std::size_t classes);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation (n - 1); 0 for n < 2
};

MeanStd mean_std(std::span<const double> values);

/// Per-fold reports with mean +- std for each scalar metric.
struct FoldSummary {
  std::vector<MetricReport> folds;
  MeanStd accuracy, precision, recall, f1;
};

FoldSummary summarize_folds(std::vector<MetricReport> folds);

/// `metric,value` rows.
void write_metrics_csv(std::ostream& out, const MetricReport& report);
/// `fold,accuracy,precision,recall,f1` rows, then `mean` and `std` rows.
void write_fold_csv(std::ostream& out, const FoldSummary& summary);
/// `truth,<class0>,<class1>,...` rows.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion);

}  // namespace hdnet
