#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hdnet/metrics.hpp"
#include "hdnet/random.hpp"

using namespace hdnet;

namespace {

// Per-class precision/recall/F1 averaged over classes present in truth or
// predictions, computed directly from label lists.
MetricReport oracle(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  MetricReport r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      fp += truth[i] != c && pred[i] == c;
      fn += truth[i] == c && pred[i] != c;
    }
    if (tp + fp + fn == 0) continue;
    ++present;
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double q = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    r.precision += p;
    r.recall += q;
    r.f1 += p + q > 0 ? 2 * p * q / (p + q) : 0.0;
  }
  r.precision /= present;
  r.recall /= present;
  r.f1 /= present;
  return r;
}

}  // namespace

TEST_CASE("metrics: perfect predictions") {
  const std::vector<int> y{0, 1, 2, 2, 1};
  const MetricReport r = compute_metrics(y, y, 3);
  CHECK(r.accuracy == 1.0);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);
  const std::vector<int> single{0, 0, 0};
  CHECK(compute_metrics(single, single, 1).accuracy == 1.0);
}

TEST_CASE("metrics: two-class hand example") {
  // Confusion [[1, 1], [0, 2]]: class 0 has P=1, R=0.5; class 1 has P=2/3, R=1.
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const MetricReport r = compute_metrics(truth, pred, 2);
  CHECK(r.accuracy == 0.75);
  CHECK(r.precision == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(r.recall == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-15));
  CHECK(r.confusion.at(0, 0) == 1);
  CHECK(r.confusion.at(0, 1) == 1);
  CHECK(r.confusion.at(1, 1) == 2);
}

TEST_CASE("metrics: never-predicted class contributes zero precision") {
  const std::vector<int> truth{0, 1, 2}, pred{0, 0, 1};
  const MetricReport r = compute_metrics(truth, pred, 4);
  CHECK(r.precision == doctest::Approx((0.5 + 0.0 + 0.0) / 3.0));
  CHECK(r.recall == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics agree with the label-list oracle and the confusion matrix") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(40);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(classes));
      pred[i] = rng.uniform() < 0.6 ? truth[i] : static_cast<int>(rng.below(classes));
    }
    const MetricReport r = compute_metrics(truth, pred, static_cast<std::size_t>(classes));
    const MetricReport o = oracle(truth, pred, classes);
    CHECK(std::abs(r.accuracy - o.accuracy) < 1e-12);
    CHECK(std::abs(r.precision - o.precision) < 1e-12);
    CHECK(std::abs(r.recall - o.recall) < 1e-12);
    CHECK(std::abs(r.f1 - o.f1) < 1e-12);

    std::size_t trace = 0;
    for (int c = 0; c < classes; ++c) {
      trace += r.confusion.at(c, c);
      std::size_t support = 0;
      for (int t : truth) support += t == c;
      CHECK(r.confusion.support(c) == support);
    }
    CHECK(r.confusion.total() == n);
    CHECK(static_cast<double>(trace) / static_cast<double>(n) == r.accuracy);

    const MetricReport again = metrics_from_confusion(r.confusion);
    CHECK(std::abs(again.f1 - r.f1) < 1e-12);
    CHECK(std::abs(again.precision - r.precision) < 1e-12);
  }
}

TEST_CASE("metrics: invalid input") {
  const std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS(compute_metrics(a, b, 2));
  const std::vector<int> c{0, 5};
  CHECK_THROWS(compute_metrics(c, a, 2));
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> v{0.9, 0.95, 0.85, 1.0, 0.8};
  const MeanStd m = mean_std(v);
  CHECK(m.mean == doctest::Approx(0.9));
  CHECK(m.stddev == doctest::Approx(std::sqrt(0.025 / 4.0)));
  const std::vector<double> one{0.7};
  CHECK(mean_std(one).stddev == 0.0);
}

TEST_CASE("fold CSV rows reproduce the summary") {
  std::vector<MetricReport> folds;
  Rng rng(2);
  for (int f = 0; f < 5; ++f) {
    std::vector<int> truth(20), pred(20);
    for (int i = 0; i < 20; ++i) {
      truth[i] = i % 3;
      pred[i] = rng.uniform() < 0.7 ? truth[i] : static_cast<int>(rng.below(3));
    }
    folds.push_back(compute_metrics(truth, pred, 3));
  }
  const FoldSummary s = summarize_folds(folds);
  CHECK(s.folds.size() == 5);
  std::stringstream csv;
  write_fold_csv(csv, s);

  std::string line;
  std::getline(csv, line);
  CHECK(line == "fold,accuracy,precision,recall,f1");
  std::vector<double> acc;
  double mean_row = -1, std_row = -1;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    const std::string key = line.substr(0, comma);
    const double value = std::stod(line.substr(comma + 1, line.find(',', comma + 1) - comma - 1));
    if (key == "mean") {
      mean_row = value;
    } else if (key == "std") {
      std_row = value;
    } else {
      acc.push_back(value);
    }
  }
  REQUIRE(acc.size() == 5);
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= 5.0;
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  CHECK(mean_row == doctest::Approx(mean).epsilon(1e-12));
  CHECK(std_row == doctest::Approx(std::sqrt(var / 4.0)).epsilon(1e-12));
}

TEST_CASE("metric and confusion CSV layout") {
  const std::vector<int> truth{0, 1, 1}, pred{0, 1, 0};
  const MetricReport r = compute_metrics(truth, pred, 2);
  std::stringstream m, c;
  write_metrics_csv(m, r);
  write_confusion_csv(c, r.confusion);
  CHECK(m.str().rfind("metric,value\naccuracy,", 0) == 0);
  CHECK(c.str() == "truth,pred0,pred1\n0,1,0\n1,1,1\n");
}
