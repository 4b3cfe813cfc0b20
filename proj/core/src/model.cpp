#include "hdnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {
constexpr const char* kModule = "model";

ad::Matrix as_matrix(const std::vector<double>& packed, std::size_t rows) {
  return ad::Matrix(rows, GaitSample::kChannels, packed);
}
}  // namespace

std::string to_string(SamplingStrategy strategy) {
  switch (strategy) {
    case SamplingStrategy::dfs: return "dfs";
    case SamplingStrategy::random: return "random";
    case SamplingStrategy::none: return "none";
  }
  return "?";
}

SamplingStrategy parse_strategy(const std::string& name) {
  if (name == "dfs") return SamplingStrategy::dfs;
  if (name == "random") return SamplingStrategy::random;
  if (name == "none") return SamplingStrategy::none;
  throw ConfigError("unknown sampling strategy '" + name + "' (expected dfs, random or none)");
}

void ModelConfig::validate() const {
  if (classes == 0) throw ConfigError("model needs at least one class");
  if (backbone.k == 0) throw ConfigError("model.k must be >= 1");
  if (backbone.width1 == 0 || backbone.width2 == 0 || backbone.embed_dim == 0 ||
      backbone.kernel_hidden == 0) {
    throw ConfigError("model widths must be >= 1");
  }
  sampler.validate();
  ta.validate(frame_dim());
}

HdNet::HdNet(const ModelConfig& config, ParamStore& store, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng cloud_rng(mix_seed(seed, 0x636c6f7564));
  cloud_ = SpatialBackbone(config.backbone, store, "cloud", cloud_rng);
  if (config.use_flow) {
    Rng flow_rng(mix_seed(seed, 0x666c6f77));
    flow_ = SpatialBackbone(config.backbone, store, "flow", flow_rng);
  }
  if (config.strategy == SamplingStrategy::dfs) {
    Rng sampler_rng(mix_seed(seed, 0x646673));
    scorer_ = FrameScorer(config.frame_dim(), config.sampler.hidden, store, "sampler", sampler_rng);
  }
  Rng ta_rng(mix_seed(seed, 0x7461));
  aggregator_ = TemporalAggregator(config.ta, config.frame_dim(), store, "ta", ta_rng);
  Rng head_rng(mix_seed(seed, 0x68656164));
  head_ = ClassifierHead(config.frame_dim(), config.classes, store, "head", head_rng);
}

ad::Value HdNet::frame_features(ad::Tape& tape, const ParamStore& store,
                                const GaitSample& sample) const {
  const std::size_t rows = sample.frames * sample.points;
  if (sample.frames == 0 || sample.points == 0 ||
      sample.cloud.size() != rows * GaitSample::kChannels ||
      sample.flow.size() != rows * GaitSample::kChannels) {
    throw DataError(kModule, "malformed sample (" + std::to_string(sample.frames) + " frames, " +
                                 std::to_string(sample.points) + " points)");
  }
  const ad::Value cloud = cloud_.forward(tape, store, as_matrix(sample.cloud, rows), sample.frames);
  if (!config_.use_flow) return cloud;
  const ad::Value flow = flow_.forward(tape, store, as_matrix(sample.flow, rows), sample.frames);
  return concat_streams(cloud, flow);
}

ForwardResult HdNet::forward(ad::Tape& tape, const ParamStore& store, const GaitSample& sample,
                             const ForwardOptions& options) const {
  ad::Value features = frame_features(tape, store, sample);
  const std::size_t frames = sample.frames;

  if (config_.ta.positional) {
    std::vector<std::size_t> positions(frames);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    features = ad::add(features, tape.constant(sinusoidal_encoding(positions, features.cols())));
  }

  ForwardResult result;
  result.keep.assign(frames, 1);
  ad::Value selected = features;

  switch (config_.strategy) {
    case SamplingStrategy::none:
      break;
    case SamplingStrategy::random: {
      if (options.frame_subset) {
        const auto& subset = *options.frame_subset;
        if (subset.empty()) throw DataError(kModule, "random frame subset is empty");
        for (std::size_t f : subset) {
          if (f >= frames) throw DataError(kModule, "frame subset index out of range");
        }
        result.keep.assign(frames, 0);
        for (std::size_t f : subset) result.keep[f] = 1;
        selected = apply_mask_inference(features, subset);
      }
      break;
    }
    case SamplingStrategy::dfs: {
      const ad::Value logits = scorer_.logits(tape, store, features);
      const ad::Value log_probs = ad::log_softmax_rows(logits);
      if (options.training) {
        if (!options.gumbel_noise) throw DataError(kModule, "training with DFS needs Gumbel noise");
        const RelaxedMask mask = gumbel_softmax(tape, log_probs, *options.gumbel_noise,
                                                options.temperature, config_.sampler.hard);
        result.keep = mask.keep;
        selected = apply_mask_training(features, mask.keep_column);
        result.mask_term = mask_loss(mask.keep_column, config_.sampler.keep_ratio);
      } else {
        const ad::Matrix& lp = log_probs.value();
        std::vector<double> keep_scores(frames);
        for (std::size_t i = 0; i < frames; ++i) {
          result.keep[i] = lp(i, 0) >= lp(i, 1) ? 1 : 0;
          keep_scores[i] = lp(i, 0);
        }
        std::vector<std::size_t> rows;
        if (config_.sampler.inference == InferenceRule::budget) {
          rows = top_rows(keep_scores, config_.sampler.keep_ratio);
          result.keep.assign(frames, 0);
          for (std::size_t r : rows) result.keep[r] = 1;
        } else {
          rows = kept_rows(result.keep, keep_scores);
        }
        selected = apply_mask_inference(features, rows);
      }
      break;
    }
  }

  std::size_t kept = 0;
  for (int k : result.keep) kept += k != 0;
  result.keep_fraction = static_cast<double>(kept) / static_cast<double>(frames);

  const ad::Value pooled = aggregator_.forward(tape, store, selected);
  result.log_probs = head_.log_probs(tape, store, pooled);
  result.loss = total_loss(result.log_probs, sample.label, result.mask_term, config_.sampler.beta);
  return result;
}

int HdNet::predict(const ParamStore& store, const GaitSample& sample,
                   const std::vector<std::size_t>* frame_subset) const {
  ad::Tape tape(false);
  ForwardOptions options;
  options.frame_subset = frame_subset;
  GaitSample probe = sample;
  if (probe.label < 0 || static_cast<std::size_t>(probe.label) >= config_.classes) probe.label = 0;
  const ForwardResult result = forward(tape, store, probe, options);
  const auto row = result.log_probs.value().row(0);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<std::size_t> random_frame_subset(std::size_t frames, double ratio, Rng& rng) {
  if (frames == 0) return {};
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("sampling ratio must be in (0, 1]");
  // Guard against ratio * frames landing a hair above an integer.
  const double want = std::ceil(ratio * static_cast<double>(frames) - 1e-9);
  const std::size_t count = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, frames);
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace hdnet
