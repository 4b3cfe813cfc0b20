#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdnet/autodiff.hpp"
#include "hdnet/params.hpp"

namespace hdnet {

class Rng;

struct TAConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  /// Add sinusoidal encodings of the original frame positions before the
  /// first block. Off by default, which makes the aggregator order-blind.
  bool positional = false;

  void validate(std::size_t model_dim) const;
};

/// Pre-norm encoder block:
///   X'' = X + MSA(LN(X)),  X' = X'' + MLP(LN(X'')).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_hidden, ParamStore& store,
                   const std::string& prefix, Rng& rng);

  /// When `attention` is non-null it receives one M x M weight matrix per head.
  ad::Value forward(ad::Tape& tape, const ParamStore& store, ad::Value x,
                    std::vector<ad::Matrix>* attention = nullptr) const;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t heads() const noexcept { return heads_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  std::size_t norm1_gain_ = 0, norm1_bias_ = 0;
  std::size_t query_weight_ = 0, query_bias_ = 0;
  std::size_t key_weight_ = 0, key_bias_ = 0;
  std::size_t value_weight_ = 0, value_bias_ = 0;
  std::size_t proj_weight_ = 0, proj_bias_ = 0;
  std::size_t norm2_gain_ = 0, norm2_bias_ = 0;
  std::size_t fc1_weight_ = 0, fc1_bias_ = 0;
  std::size_t fc2_weight_ = 0, fc2_bias_ = 0;
};

/// Stack of transformer blocks followed by a mean over frames.
class TemporalAggregator {
 public:
  TemporalAggregator() = default;
  TemporalAggregator(const TAConfig& config, std::size_t dim, ParamStore& store,
                     const std::string& prefix, Rng& rng);

  /// M x dim -> M x dim after all blocks.
  ad::Value encode(ad::Tape& tape, const ParamStore& store, ad::Value frames) const;
  /// M x dim -> 1 x dim (blocks then mean-pool). Requires M >= 1.
  ad::Value forward(ad::Tape& tape, const ParamStore& store, ad::Value frames) const;

  const TAConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<TransformerBlock>& blocks() const noexcept { return blocks_; }

 private:
  TAConfig config_;
  std::size_t dim_ = 0;
  std::vector<TransformerBlock> blocks_;
};

/// Affine map to class logits followed by a row log-softmax.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(std::size_t dim, std::size_t classes, ParamStore& store, const std::string& prefix,
                 Rng& rng);

  ad::Value log_probs(ad::Tape& tape, const ParamStore& store, ad::Value pooled) const;
  std::size_t classes() const noexcept { return classes_; }

 private:
  std::size_t classes_ = 0;
  std::size_t weight_ = 0, bias_ = 0;
};

/// Standard sin/cos encoding for the given (possibly non-contiguous) positions.
ad::Matrix sinusoidal_encoding(std::span<const std::size_t> positions, std::size_t dim);

/// Per-frame concatenation, cloud features first.
ad::Value concat_streams(ad::Value cloud, ad::Value flow);
ad::Matrix concat_streams(const ad::Matrix& cloud, const ad::Matrix& flow);

/// -log_probs[label] + beta * mask_term.
double total_loss(std::span<const double> log_probs, int label, double mask_term, double beta);
/// Differentiable form; `log_probs` is 1 x C. `mask_term` may be absent.
ad::Value total_loss(ad::Value log_probs, int label, std::optional<ad::Value> mask_term, double beta);

}  // namespace hdnet
