#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hdnet/dataset.hpp"
#include "hdnet/metrics.hpp"
#include "hdnet/model.hpp"
#include "hdnet/params.hpp"

namespace hdnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamStore& store, const AdamConfig& config);
  /// One bias-corrected update of every trainable parameter from `grads`
  /// (aligned with store order).
  void step(ParamStore& store, const std::vector<ad::Matrix>& grads);
  std::size_t steps() const noexcept { return steps_; }

 private:
  AdamConfig config_;
  std::vector<ad::Matrix> first_;
  std::vector<ad::Matrix> second_;
  std::size_t steps_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  AdamConfig adam;
  std::uint64_t seed = 1;
  /// Record accuracies every `eval_every` epochs (and after the last); 0 = only at the end.
  std::size_t eval_every = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;           ///< mean per-sample training loss
  double keep_fraction = 1.0;  ///< mean fraction of frames kept during training
  double temperature = 1.0;
  std::optional<double> train_accuracy;
  std::optional<double> eval_accuracy;
};

struct TrainResult {
  ParamStore params;
  std::vector<EpochRecord> history;
};

/// Called after every epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the NLL + mask loss. Shuffling, Gumbel noise, random
/// frame subsets and initialization are all derived from `train.seed`; the
/// result is bitwise identical for any thread count. Throws NumericError on
/// a non-finite loss.
TrainResult train(const ModelConfig& model, const TrainConfig& train, const Dataset& data,
                  const Dataset* eval = nullptr, const EpochCallback& on_epoch = {});

/// Inference with pruning. The random strategy draws ceil(keep_ratio * T)
/// frames per sample from `seed`.
MetricReport evaluate(const ModelConfig& model, const ParamStore& params, const Dataset& data,
                      std::uint64_t seed = 0, std::size_t threads = 1);

/// Fresh parameter store laid out for `model` (initialized from `seed`).
ParamStore make_params(const ModelConfig& model, std::uint64_t seed);

struct CrossValidationResult {
  FoldSummary summary;
  std::vector<std::vector<std::size_t>> test_indices;   ///< per fold
  std::vector<std::vector<std::size_t>> train_indices;  ///< per fold
};

/// k-fold protocol. When `checkpoint_dir` is set, fold f's parameters are
/// written to `fold<f>.params` inside it.
CrossValidationResult cross_validate(const ModelConfig& model, const TrainConfig& train,
                                     const Dataset& data, std::size_t k, SplitMode mode,
                                     const std::optional<std::filesystem::path>& checkpoint_dir = {});

struct SweepRow {
  double ratio = 1.0;
  SamplingStrategy strategy = SamplingStrategy::dfs;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double keep_fraction = 1.0;  ///< mean fraction of frames used at evaluation
};

/// Trains and evaluates one model per (ratio, strategy, seed) cell on a fixed
/// train/test pair. Seeds replace `train.seed` per cell.
std::vector<SweepRow> ratio_sweep(const ModelConfig& model, const TrainConfig& train,
                                  const Dataset& train_set, const Dataset& test_set,
                                  const std::vector<double>& ratios,
                                  const std::vector<SamplingStrategy>& strategies,
                                  const std::vector<std::uint64_t>& seeds);

/// Mean evaluation keep fraction across a dataset (DFS or random strategy).
double evaluation_keep_fraction(const ModelConfig& model, const ParamStore& params,
                                const Dataset& data, std::uint64_t seed = 0);

}  // namespace hdnet
