#include "hdnet/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "hdnet/error.hpp"
#include "hdnet/preprocess.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "training";

// Seed salts: one independent stream per consumer.
constexpr std::uint64_t kInitSalt = 1;
constexpr std::uint64_t kShuffleSalt = 2;
constexpr std::uint64_t kNoiseSalt = 3;
constexpr std::uint64_t kSubsetSalt = 4;
constexpr std::uint64_t kEvalSalt = 5;
constexpr std::uint64_t kFoldSalt = 6;

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first failure
/// by index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t salt, std::uint64_t a) {
  return mix_seed(mix_seed(seed, salt), a);
}

std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t salt, std::uint64_t a, std::uint64_t b) {
  return mix_seed(cell_seed(seed, salt, a), b);
}

/// Network bound to a private copy of `params` with checked layout.
struct BoundModel {
  ParamStore store;
  HdNet net;

  BoundModel(const ModelConfig& model, const ParamStore& params) : net(model, store, 0) {
    store.assign_values(params);
  }
};

struct InferenceOutcome {
  std::vector<int> predicted;
  std::vector<double> keep_fraction;
};

InferenceOutcome run_inference(const ModelConfig& model, const ParamStore& params, const Dataset& data,
                               std::uint64_t seed, std::size_t threads) {
  if (data.classes() != model.classes) {
    throw DataError(kModule, "dataset has " + std::to_string(data.classes()) + " classes, model has " +
                                 std::to_string(model.classes));
  }
  const BoundModel bound(model, params);
  InferenceOutcome out;
  out.predicted.resize(data.size());
  out.keep_fraction.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const GaitSample& sample = data.samples[i];
    std::vector<std::size_t> subset;
    ForwardOptions options;
    if (model.strategy == SamplingStrategy::random) {
      Rng rng(cell_seed(seed, kEvalSalt, i));
      subset = random_frame_subset(sample.frames, model.sampler.keep_ratio, rng);
      options.frame_subset = &subset;
    }
    ad::Tape tape(false);
    const ForwardResult result = bound.net.forward(tape, bound.store, sample, options);
    const auto row = result.log_probs.value().row(0);
    out.predicted[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    out.keep_fraction[i] = result.keep_fraction;
  });
  return out;
}

double accuracy_of(const InferenceOutcome& outcome, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += outcome.predicted[i] == data.samples[i].label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

Adam::Adam(const ParamStore& store, const AdamConfig& config)
    : config_(config), first_(store.make_grad_buffers()), second_(store.make_grad_buffers()) {}

void Adam::step(ParamStore& store, const std::vector<ad::Matrix>& grads) {
  if (grads.size() != store.size()) throw ShapeError(kModule, "gradient count does not match parameters");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  auto lock = store.write_lock();
  for (std::size_t p = 0; p < store.size(); ++p) {
    Parameter& param = store.at(p);
    if (!param.trainable) continue;
    const ad::Matrix& g = grads[p];
    if (!(g.shape() == param.value.shape())) {
      throw ShapeError(kModule, "gradient shape mismatch for '" + param.name + "'");
    }
    ad::Matrix& m = first_[p];
    ad::Matrix& v = second_[p];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param.value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(adam.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
}

ParamStore make_params(const ModelConfig& model, std::uint64_t seed) {
  ParamStore store;
  HdNet net(model, store, seed);
  return store;
}

TrainResult train(const ModelConfig& model, const TrainConfig& config, const Dataset& data,
                  const Dataset* eval, const EpochCallback& on_epoch) {
  config.validate();
  data.validate();
  if (data.empty()) throw DataError(kModule, "training set is empty");
  if (data.classes() != model.classes) {
    throw DataError(kModule, "dataset has " + std::to_string(data.classes()) + " classes, model has " +
                                 std::to_string(model.classes));
  }

  TrainResult result;
  const HdNet net(model, result.params, mix_seed(config.seed, kInitSalt));
  ParamStore& params = result.params;
  Adam optimizer(params, config.adam);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(cell_seed(config.seed, kShuffleSalt, epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    const double temperature = sampler_temperature(model.sampler, epoch, config.epochs);

    double loss_sum = 0.0, keep_sum = 0.0;
    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += config.batch_size, ++batch) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      std::vector<std::vector<ad::Matrix>> grads(count);
      std::vector<double> losses(count), keeps(count);

      parallel_for(count, config.threads, [&](std::size_t j) {
        const std::size_t index = order[begin + j];
        const GaitSample& sample = data.samples[index];
        ForwardOptions options;
        options.training = true;
        options.temperature = temperature;
        ad::Matrix noise;
        std::vector<std::size_t> subset;
        if (model.strategy == SamplingStrategy::dfs) {
          Rng noise_rng(cell_seed(config.seed, kNoiseSalt, epoch, index));
          noise = sample_gumbel_noise(sample.frames, noise_rng);
          options.gumbel_noise = &noise;
        } else if (model.strategy == SamplingStrategy::random) {
          Rng subset_rng(cell_seed(config.seed, kSubsetSalt, epoch, index));
          subset = random_frame_subset(sample.frames, model.sampler.keep_ratio, subset_rng);
          options.frame_subset = &subset;
        }
        ad::Tape tape;
        const ForwardResult out = net.forward(tape, params, sample, options);
        losses[j] = out.loss.item();
        keeps[j] = out.keep_fraction;
        if (!std::isfinite(losses[j])) return;
        tape.backward(out.loss);
        grads[j] = params.make_grad_buffers();
        tape.accumulate_param_grads(grads[j], 1.0 / static_cast<double>(count));
      });

      for (std::size_t j = 0; j < count; ++j) {
        if (!std::isfinite(losses[j])) {
          throw NumericError(kModule, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                          ", batch " + std::to_string(batch + 1) + " (sample " +
                                          data.info[order[begin + j]].id + ")");
        }
      }
      // Fixed reduction order keeps results independent of the thread count.
      std::vector<ad::Matrix> total = params.make_grad_buffers();
      for (std::size_t j = 0; j < count; ++j) {
        for (std::size_t p = 0; p < total.size(); ++p) {
          auto dst = total[p].values();
          auto src = grads[j][p].values();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        loss_sum += losses[j];
        keep_sum += keeps[j];
      }
      optimizer.step(params, total);
    }

    EpochRecord record;
    record.epoch = epoch + 1;
    record.loss = loss_sum / static_cast<double>(data.size());
    record.keep_fraction = keep_sum / static_cast<double>(data.size());
    record.temperature = temperature;
    const bool last = epoch + 1 == config.epochs;
    if (last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)) {
      record.train_accuracy =
          accuracy_of(run_inference(model, params, data, config.seed, config.threads), data);
      if (eval && !eval->empty()) {
        record.eval_accuracy =
            accuracy_of(run_inference(model, params, *eval, config.seed, config.threads), *eval);
      }
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

MetricReport evaluate(const ModelConfig& model, const ParamStore& params, const Dataset& data,
                      std::uint64_t seed, std::size_t threads) {
  data.validate();
  const InferenceOutcome outcome = run_inference(model, params, data, seed, threads);
  return compute_metrics(data.labels(), outcome.predicted, model.classes);
}

double evaluation_keep_fraction(const ModelConfig& model, const ParamStore& params, const Dataset& data,
                                std::uint64_t seed) {
  if (data.empty()) return 0.0;
  const InferenceOutcome outcome = run_inference(model, params, data, seed, 1);
  double sum = 0.0;
  for (double k : outcome.keep_fraction) sum += k;
  return sum / static_cast<double>(data.size());
}

CrossValidationResult cross_validate(const ModelConfig& model, const TrainConfig& train_config,
                                     const Dataset& data, std::size_t k, SplitMode mode,
                                     const std::optional<std::filesystem::path>& checkpoint_dir) {
  if (k < 2) throw ConfigError("cv.folds must be >= 2");
  const std::uint64_t fold_seed = mix_seed(train_config.seed, kFoldSalt);
  FoldPlan plan;
  if (mode == SplitMode::window) {
    plan = kfold_split(data.size(), k, fold_seed);
  } else {
    const auto groups = data.groups();
    plan = kfold_split_grouped(groups, k, fold_seed);
  }

  CrossValidationResult result;
  std::vector<MetricReport> reports;
  if (checkpoint_dir) std::filesystem::create_directories(*checkpoint_dir);
  for (std::size_t fold = 0; fold < k; ++fold) {
    const auto test_ids = plan.members(fold);
    const auto train_ids = plan.complement(fold);
    const Dataset train_set = subset(data, train_ids);
    const Dataset test_set = subset(data, test_ids);
    const TrainResult trained = train(model, train_config, train_set);
    reports.push_back(evaluate(model, trained.params, test_set, train_config.seed, train_config.threads));
    if (checkpoint_dir) trained.params.save(*checkpoint_dir / ("fold" + std::to_string(fold) + ".params"));
    result.test_indices.push_back(test_ids);
    result.train_indices.push_back(train_ids);
  }
  result.summary = summarize_folds(std::move(reports));
  return result;
}

std::vector<SweepRow> ratio_sweep(const ModelConfig& model, const TrainConfig& train_config,
                                  const Dataset& train_set, const Dataset& test_set,
                                  const std::vector<double>& ratios,
                                  const std::vector<SamplingStrategy>& strategies,
                                  const std::vector<std::uint64_t>& seeds) {
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("sweep ratios must lie in (0, 1]");
  }
  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    for (SamplingStrategy strategy : strategies) {
      if (strategy == SamplingStrategy::none) throw ConfigError("sweep strategies must be dfs or random");
      for (std::uint64_t seed : seeds) {
        ModelConfig cell = model;
        cell.strategy = strategy;
        cell.sampler.keep_ratio = ratio;
        TrainConfig cell_train = train_config;
        cell_train.seed = seed;
        const TrainResult trained = train(cell, cell_train, train_set);
        SweepRow row;
        row.ratio = ratio;
        row.strategy = strategy;
        row.seed = seed;
        const InferenceOutcome outcome =
            run_inference(cell, trained.params, test_set, seed, train_config.threads);
        row.accuracy = accuracy_of(outcome, test_set);
        double keep = 0.0;
        for (double k : outcome.keep_fraction) keep += k;
        row.keep_fraction = test_set.empty() ? 0.0 : keep / static_cast<double>(test_set.size());
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace hdnet
