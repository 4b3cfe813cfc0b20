#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "hdnet/error.hpp"
#include "hdnet/training.hpp"
#include "test_support.hpp"

using namespace hdnet;
using test::random_dataset;
using test::small_model;

namespace {

TrainConfig quick(std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 3;
  t.seed = 5;
  return t;
}

bool same_values(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!(a.at(p).value == b.at(p).value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("adam: first step moves each weight by lr against the gradient sign") {
  ParamStore store;
  const std::size_t id = store.add("w", ad::Matrix::from_rows({{1.0, -2.0, 0.5}}));
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam adam(store, cfg);
  std::vector<ad::Matrix> grads{ad::Matrix::from_rows({{4.0, -0.25, 0.0}})};
  adam.step(store, grads);
  const ad::Matrix& w = store.at(id).value;
  // Bias correction makes m_hat = g and v_hat = g^2 after one step.
  CHECK(w(0, 0) == doctest::Approx(1.0 - 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  CHECK(w(0, 1) == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));
  CHECK(w(0, 2) == 0.5);

  // Second step against a hand-rolled recursion.
  grads[0] = ad::Matrix::from_rows({{-1.0, 1.0, 2.0}});
  const double before = w(0, 0);
  adam.step(store, grads);
  const double m = 0.9 * 0.1 * 4.0 + 0.1 * -1.0;
  const double v = 0.999 * 0.001 * 16.0 + 0.001 * 1.0;
  const double step = 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(w(0, 0) == doctest::Approx(before - step).epsilon(1e-13));
  CHECK(adam.steps() == 2);
}

TEST_CASE("training: lr = 0 leaves the initialization untouched") {
  const Dataset d = random_dataset(6, 2, 4, 8, 1);
  const ModelConfig m = small_model(2);
  TrainConfig t = quick(1);
  t.adam.lr = 0.0;
  const TrainResult r = train(m, t, d);
  CHECK(same_values(r.params, make_params(m, mix_seed(t.seed, 1))));
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].train_accuracy.has_value());
}

TEST_CASE("training: bitwise reproducible and independent of the thread count") {
  const Dataset d = random_dataset(7, 3, 4, 8, 2);
  const ModelConfig m = small_model(3);
  TrainConfig t = quick(2);
  const TrainResult a = train(m, t, d);
  const TrainResult b = train(m, t, d);
  CHECK(same_values(a.params, b.params));
  t.threads = 3;
  const TrainResult c = train(m, t, d);
  CHECK(same_values(a.params, c.params));
  CHECK(a.history.back().loss == c.history.back().loss);

  const MetricReport e1 = evaluate(m, a.params, d, 0, 1);
  const MetricReport e3 = evaluate(m, a.params, d, 0, 3);
  CHECK(e1.accuracy == e3.accuracy);
  CHECK(e1.f1 == e3.f1);

  t.seed = 6;
  CHECK_FALSE(same_values(a.params, train(m, t, d).params));
}

TEST_CASE("training: loss falls when fitting a handful of samples") {
  const Dataset d = random_dataset(4, 2, 4, 8, 3);
  ModelConfig m = small_model(2);
  m.strategy = SamplingStrategy::none;
  TrainConfig t = quick(25);
  t.batch_size = 4;
  t.adam.lr = 3e-3;
  const TrainResult r = train(m, t, d);
  CHECK(r.history.back().loss < 0.5 * r.history.front().loss);
  CHECK(*r.history.back().train_accuracy == 1.0);
}

TEST_CASE("training: keep fraction reflects the sampling strategy") {
  const Dataset d = random_dataset(4, 2, 10, 8, 4);
  ModelConfig m = small_model(2);
  m.strategy = SamplingStrategy::random;
  m.sampler.keep_ratio = 0.3;
  const TrainResult r = train(m, quick(1), d);
  CHECK(r.history[0].keep_fraction == doctest::Approx(0.3));
  CHECK(evaluation_keep_fraction(m, r.params, d) == doctest::Approx(0.3));
  m.strategy = SamplingStrategy::none;
  CHECK(train(m, quick(1), d).history[0].keep_fraction == 1.0);

  // Fresh DFS keeps every frame under the threshold rule; the budget rule keeps ceil(t * T).
  m.strategy = SamplingStrategy::dfs;
  const ParamStore fresh = make_params(m, 1);
  CHECK(evaluation_keep_fraction(m, fresh, d) == 1.0);
  m.sampler.inference = InferenceRule::budget;
  CHECK(evaluation_keep_fraction(m, fresh, d) == doctest::Approx(0.3));
}

TEST_CASE("training: bad inputs") {
  const Dataset d = random_dataset(4, 2, 4, 8, 5);
  CHECK_THROWS_AS(train(small_model(3), quick(), d), DataError);
  Dataset empty = d;
  empty.samples.clear();
  empty.info.clear();
  CHECK_THROWS_AS(train(small_model(2), quick(), empty), DataError);
  Dataset poisoned = d;
  poisoned.samples[1].cloud[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(small_model(2), quick(), poisoned), NumericError);
  TrainConfig bad = quick();
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(small_model(2), bad, d), ConfigError);
}

TEST_CASE("cross validation: k folds partition the samples") {
  const Dataset d = random_dataset(9, 3, 3, 8, 6);
  const ModelConfig m = small_model(3);
  const CrossValidationResult cv = cross_validate(m, quick(1), d, 3, SplitMode::window);
  REQUIRE(cv.summary.folds.size() == 3);
  std::vector<std::size_t> seen;
  for (std::size_t f = 0; f < 3; ++f) {
    const auto& test_ids = cv.test_indices[f];
    const auto& train_ids = cv.train_indices[f];
    CHECK(test_ids.size() + train_ids.size() == 9);
    for (std::size_t i : test_ids) {
      CHECK(std::find(train_ids.begin(), train_ids.end(), i) == train_ids.end());
      seen.push_back(i);
    }
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 9; ++i) CHECK(seen[i] == i);
  CHECK_THROWS_AS(cross_validate(m, quick(1), d, 1, SplitMode::window), ConfigError);
}

TEST_CASE("cross validation: recording mode never splits a recording") {
  Dataset d = random_dataset(12, 2, 3, 8, 7);
  for (std::size_t i = 0; i < d.size(); ++i) d.info[i].source = "rec" + std::to_string(i / 3) + ".csv";
  for (std::size_t i = 0; i < d.size(); ++i) d.samples[i].label = static_cast<int>((i / 3) % 2);
  const auto groups = d.groups();
  const CrossValidationResult cv = cross_validate(small_model(2), quick(1), d, 2, SplitMode::recording);
  for (std::size_t f = 0; f < 2; ++f) {
    std::set<std::size_t> test_groups, train_groups;
    for (std::size_t i : cv.test_indices[f]) test_groups.insert(groups[i]);
    for (std::size_t i : cv.train_indices[f]) train_groups.insert(groups[i]);
    for (std::size_t g : test_groups) CHECK(train_groups.count(g) == 0);
  }
}

TEST_CASE("ratio sweep: one row per cell") {
  const Dataset train_set = random_dataset(4, 2, 5, 8, 8);
  const Dataset test_set = random_dataset(4, 2, 5, 8, 9);
  const std::vector<double> ratios{0.4, 1.0};
  const std::vector<SamplingStrategy> strategies{SamplingStrategy::dfs, SamplingStrategy::random};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto rows = ratio_sweep(small_model(2), quick(1), train_set, test_set, ratios, strategies, seeds);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].ratio == 0.4);
  CHECK(rows[0].strategy == SamplingStrategy::dfs);
  CHECK(rows[1].seed == 2);
  for (const auto& row : rows) {
    if (row.strategy == SamplingStrategy::random) CHECK(row.keep_fraction == doctest::Approx(row.ratio));
    CHECK(row.keep_fraction > 0.0);
    CHECK(row.keep_fraction <= 1.0);
  }
  const std::vector<double> bad{0.0};
  CHECK_THROWS_AS(ratio_sweep(small_model(2), quick(1), train_set, test_set, bad, strategies, seeds),
                  ConfigError);
}

TEST_CASE("random frame subsets") {
  Rng rng(3);
  for (std::size_t frames : {1u, 7u, 20u}) {
    for (double ratio : {0.1, 0.5, 1.0}) {
      const auto s = random_frame_subset(frames, ratio, rng);
      CHECK(s.size() == static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(frames) - 1e-9)));
      CHECK(std::is_sorted(s.begin(), s.end()));
      CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
      CHECK((s.empty() || s.back() < frames));
    }
  }
}
