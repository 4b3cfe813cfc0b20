#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hdnet/autodiff.hpp"
#include "hdnet/params.hpp"

namespace hdnet {

class Rng;

/// How the keep mask is formed at inference, where there is no Gumbel noise.
enum class InferenceRule {
  threshold,  ///< keep frames with keep probability >= 0.5
  budget,     ///< keep the ceil(keep_ratio * M) frames with the highest keep probability
};

std::string to_string(InferenceRule rule);
InferenceRule parse_inference_rule(const std::string& name);

struct SamplerConfig {
  double keep_ratio = 0.5;   ///< target fraction t of frames kept
  double temperature = 1.0;  ///< Gumbel-Softmax tau
  double beta = 0.5;         ///< mask-loss weight
  bool anneal = false;       ///< linear tau schedule from `temperature` to `anneal_final`
  double anneal_final = 0.1;
  bool hard = true;          ///< straight-through hard mask during training
  std::size_t hidden = 64;   ///< scorer MLP width
  InferenceRule inference = InferenceRule::threshold;

  void validate() const;
};

/// Per-frame keep/prune logits and their row-softmax.
struct FrameScores {
  ad::Matrix logits;  ///< M x 2, column 0 = keep
  ad::Matrix probs;   ///< M x 2
};

/// Keep decision per frame plus the relaxed sample used for gradients.
struct KeepMask {
  std::vector<int> keep;  ///< 1 keep, 0 prune
  ad::Matrix soft;        ///< M x 2 Gumbel-Softmax sample
  double temperature = 1.0;

  std::size_t kept() const;
  double keep_fraction() const;
};

/// Linear -> LayerNorm -> GeLU -> Linear scoring head with 2 outputs. The
/// output bias starts at (+2, -2) so every frame starts out kept with
/// probability ~0.98.
class FrameScorer {
 public:
  FrameScorer() = default;
  FrameScorer(std::size_t input_dim, std::size_t hidden, ParamStore& store,
              const std::string& prefix, Rng& rng);

  ad::Value logits(ad::Tape& tape, const ParamStore& store, ad::Value embeddings) const;
  FrameScores score(const ParamStore& store, const ad::Matrix& embeddings) const;

  std::size_t input_dim() const noexcept { return input_dim_; }

 private:
  std::size_t input_dim_ = 0;
  std::size_t fc1_weight_ = 0, fc1_bias_ = 0;
  std::size_t norm_gain_ = 0, norm_bias_ = 0;
  std::size_t fc2_weight_ = 0, fc2_bias_ = 0;
};

/// M x 2 matrix of independent Gumbel(0, 1) draws.
ad::Matrix sample_gumbel_noise(std::size_t rows, Rng& rng);

/// soft[i, j] = softmax_j((log probs[i, j] + noise[i, j]) / tau). The keep
/// decision is 1 iff log p0 + g0 >= log p1 + g1 (ties keep). With `hard`
/// false the decision is informational only. Probabilities must be > 0.
KeepMask gumbel_softmax(const ad::Matrix& probs, double tau, const ad::Matrix& noise, bool hard);

/// Differentiable sample drawn from log-probabilities on a tape.
struct RelaxedMask {
  ad::Value soft;         ///< M x 2
  ad::Value keep_column;  ///< M x 1: hard values with soft gradients, or soft values
  std::vector<int> keep;
};

RelaxedMask gumbel_softmax(ad::Tape& tape, ad::Value log_probs, const ad::Matrix& noise,
                           double tau, bool hard);

/// Rows surviving inference-time pruning. If everything is pruned, the one
/// frame with the highest keep score (lowest index on ties) survives.
std::vector<std::size_t> kept_rows(const std::vector<int>& keep,
                                   const std::vector<double>& keep_scores);

/// The ceil(ratio * M) rows with the highest scores, in ascending row order
/// (lower index wins ties).
std::vector<std::size_t> top_rows(const std::vector<double>& keep_scores, double ratio);

/// Training: rows scaled by the keep column (shape preserved).
ad::Value apply_mask_training(ad::Value embeddings, ad::Value keep_column);
/// Inference: pruned rows removed.
ad::Value apply_mask_inference(ad::Value embeddings, const std::vector<std::size_t>& rows);

/// Plain-matrix form of both modes, using `mask.soft` column 0 as the keep score.
ad::Matrix apply_mask(const ad::Matrix& embeddings, const KeepMask& mask, bool training);

/// (t - kept / M)^2.
double mask_loss(const KeepMask& mask, double target);
ad::Value mask_loss(ad::Value keep_column, double target);

/// Temperature for a given epoch under the configured schedule.
double sampler_temperature(const SamplerConfig& config, std::size_t epoch, std::size_t epochs);

}  // namespace hdnet
