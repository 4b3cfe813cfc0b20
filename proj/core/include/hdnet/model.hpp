#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdnet/autodiff.hpp"
#include "hdnet/frame_sampler.hpp"
#include "hdnet/params.hpp"
#include "hdnet/point_cloud.hpp"
#include "hdnet/spatial_gnn.hpp"
#include "hdnet/temporal.hpp"

namespace hdnet {

/// How frames are selected before temporal aggregation.
enum class SamplingStrategy {
  dfs,     ///< learned Gumbel-Softmax mask
  random,  ///< caller-supplied uniform subset
  none,    ///< full sequence
};

std::string to_string(SamplingStrategy strategy);
SamplingStrategy parse_strategy(const std::string& name);

struct ModelConfig {
  BackboneConfig backbone;
  SamplerConfig sampler;
  TAConfig ta;
  std::size_t classes = 0;
  bool use_flow = true;
  SamplingStrategy strategy = SamplingStrategy::dfs;

  /// Width of one frame's fused feature (embed_dim, doubled with flow).
  std::size_t frame_dim() const noexcept { return backbone.embed_dim * (use_flow ? 2 : 1); }
  void validate() const;
};

struct ForwardOptions {
  /// Training masks rows in place; inference removes pruned rows.
  bool training = false;
  /// frames x 2 Gumbel draws; required for DFS in training mode.
  const ad::Matrix* gumbel_noise = nullptr;
  double temperature = 1.0;
  /// Frames kept by the random strategy (sorted, unique). Null keeps all.
  const std::vector<std::size_t>* frame_subset = nullptr;
};

struct ForwardResult {
  ad::Value log_probs;  ///< 1 x classes
  ad::Value loss;       ///< NLL plus weighted mask loss when a mask was trained
  std::optional<ad::Value> mask_term;
  std::vector<int> keep;  ///< per-frame decision
  double keep_fraction = 1.0;
};

/// Full network: two spatial backbones, the frame sampler, the temporal
/// aggregator and the classifier head. Holds parameter indices only; values
/// live in the ParamStore passed to each call.
class HdNet {
 public:
  HdNet() = default;
  /// Registers all parameters in `store` (which should be empty) using
  /// initialization streams derived from `seed`.
  HdNet(const ModelConfig& config, ParamStore& store, std::uint64_t seed);

  /// T x frame_dim per-frame features: cloud embedding, then flow embedding.
  ad::Value frame_features(ad::Tape& tape, const ParamStore& store, const GaitSample& sample) const;

  ForwardResult forward(ad::Tape& tape, const ParamStore& store, const GaitSample& sample,
                        const ForwardOptions& options) const;

  /// Inference-mode class prediction (argmax of log-probabilities, lowest
  /// index on ties).
  int predict(const ParamStore& store, const GaitSample& sample,
              const std::vector<std::size_t>* frame_subset = nullptr) const;

  const ModelConfig& config() const noexcept { return config_; }
  const SpatialBackbone& cloud_backbone() const noexcept { return cloud_; }
  const SpatialBackbone& flow_backbone() const noexcept { return flow_; }
  const FrameScorer& scorer() const noexcept { return scorer_; }
  const TemporalAggregator& aggregator() const noexcept { return aggregator_; }

 private:
  ModelConfig config_;
  SpatialBackbone cloud_;
  SpatialBackbone flow_;
  FrameScorer scorer_;
  TemporalAggregator aggregator_;
  ClassifierHead head_;
};

/// ceil(ratio * frames) distinct frame indices, sorted, drawn uniformly.
std::vector<std::size_t> random_frame_subset(std::size_t frames, double ratio, Rng& rng);

}  // namespace hdnet
