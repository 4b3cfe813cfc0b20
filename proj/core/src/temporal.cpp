#include "hdnet/temporal.hpp"

#include <cmath>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "temporal";

std::size_t add_weight(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng) {
  return store.add(name, uniform_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

std::size_t add_bias(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                     Rng& rng) {
  return store.add(name, uniform_matrix(1, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw DataError(kModule, "label " + std::to_string(label) + " outside [0, " +
                                 std::to_string(classes) + ")");
  }
}

}  // namespace

void TAConfig::validate(std::size_t model_dim) const {
  if (layers == 0) throw ConfigError("ta.layers must be >= 1");
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("ta.heads (" + std::to_string(heads) + ") must divide the model dim " +
                      std::to_string(model_dim));
  }
  if (mlp_ratio == 0) throw ConfigError("ta.mlp_ratio must be >= 1");
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_hidden,
                                   ParamStore& store, const std::string& prefix, Rng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError(kModule, "heads must divide the model dim");
  }
  norm1_gain_ = store.add(prefix + ".norm1.gain", ad::Matrix(1, dim, 1.0));
  norm1_bias_ = store.add(prefix + ".norm1.bias", ad::Matrix(1, dim, 0.0));
  query_weight_ = add_weight(store, prefix + ".attn.query.weight", dim, dim, rng);
  query_bias_ = add_bias(store, prefix + ".attn.query.bias", dim, dim, rng);
  key_weight_ = add_weight(store, prefix + ".attn.key.weight", dim, dim, rng);
  key_bias_ = add_bias(store, prefix + ".attn.key.bias", dim, dim, rng);
  value_weight_ = add_weight(store, prefix + ".attn.value.weight", dim, dim, rng);
  value_bias_ = add_bias(store, prefix + ".attn.value.bias", dim, dim, rng);
  proj_weight_ = add_weight(store, prefix + ".attn.proj.weight", dim, dim, rng);
  proj_bias_ = add_bias(store, prefix + ".attn.proj.bias", dim, dim, rng);
  norm2_gain_ = store.add(prefix + ".norm2.gain", ad::Matrix(1, dim, 1.0));
  norm2_bias_ = store.add(prefix + ".norm2.bias", ad::Matrix(1, dim, 0.0));
  fc1_weight_ = add_weight(store, prefix + ".mlp.fc1.weight", dim, mlp_hidden, rng);
  fc1_bias_ = add_bias(store, prefix + ".mlp.fc1.bias", dim, mlp_hidden, rng);
  fc2_weight_ = add_weight(store, prefix + ".mlp.fc2.weight", mlp_hidden, dim, rng);
  fc2_bias_ = add_bias(store, prefix + ".mlp.fc2.bias", mlp_hidden, dim, rng);
}

ad::Value TransformerBlock::forward(ad::Tape& tape, const ParamStore& store, ad::Value x,
                                    std::vector<ad::Matrix>* attention) const {
  if (x.cols() != dim_) {
    throw ShapeError(kModule, "block expects " + std::to_string(dim_) + " features, got " +
                                  x.shape().str());
  }
  auto p = [&](std::size_t index) { return tape.param(store, index); };

  const ad::Value h = ad::layer_norm(x, p(norm1_gain_), p(norm1_bias_));
  const ad::Value q = ad::affine(h, p(query_weight_), p(query_bias_));
  const ad::Value k = ad::affine(h, p(key_weight_), p(key_bias_));
  const ad::Value v = ad::affine(h, p(value_weight_), p(value_bias_));

  const std::size_t head_dim = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (attention) attention->clear();
  std::vector<ad::Value> outputs;
  outputs.reserve(heads_);
  for (std::size_t head = 0; head < heads_; ++head) {
    const std::size_t begin = head * head_dim;
    const ad::Value qh = ad::slice_cols(q, begin, head_dim);
    const ad::Value kh = ad::slice_cols(k, begin, head_dim);
    const ad::Value vh = ad::slice_cols(v, begin, head_dim);
    const ad::Value weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale));
    if (attention) attention->push_back(weights.value());
    outputs.push_back(ad::matmul(weights, vh));
  }
  const ad::Value heads = heads_ == 1 ? outputs.front() : ad::concat_cols(outputs);
  const ad::Value mid = ad::add(x, ad::affine(heads, p(proj_weight_), p(proj_bias_)));

  const ad::Value h2 = ad::layer_norm(mid, p(norm2_gain_), p(norm2_bias_));
  const ad::Value hidden = ad::gelu(ad::affine(h2, p(fc1_weight_), p(fc1_bias_)));
  return ad::add(mid, ad::affine(hidden, p(fc2_weight_), p(fc2_bias_)));
}

TemporalAggregator::TemporalAggregator(const TAConfig& config, std::size_t dim, ParamStore& store,
                                       const std::string& prefix, Rng& rng)
    : config_(config), dim_(dim) {
  config.validate(dim);
  blocks_.reserve(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    blocks_.emplace_back(dim, config.heads, dim * config.mlp_ratio, store,
                         prefix + ".block" + std::to_string(l), rng);
  }
}

ad::Value TemporalAggregator::encode(ad::Tape& tape, const ParamStore& store, ad::Value frames) const {
  if (frames.rows() == 0) throw ShapeError(kModule, "temporal aggregator needs at least one frame");
  ad::Value x = frames;
  for (const auto& block : blocks_) x = block.forward(tape, store, x);
  return x;
}

ad::Value TemporalAggregator::forward(ad::Tape& tape, const ParamStore& store, ad::Value frames) const {
  return ad::mean(encode(tape, store, frames), ad::Axis::rows);
}

ClassifierHead::ClassifierHead(std::size_t dim, std::size_t classes, ParamStore& store,
                               const std::string& prefix, Rng& rng)
    : classes_(classes) {
  if (classes == 0) throw ConfigError("class count must be >= 1");
  weight_ = add_weight(store, prefix + ".weight", dim, classes, rng);
  bias_ = add_bias(store, prefix + ".bias", dim, classes, rng);
}

ad::Value ClassifierHead::log_probs(ad::Tape& tape, const ParamStore& store, ad::Value pooled) const {
  return ad::log_softmax_rows(ad::affine(pooled, tape.param(store, weight_), tape.param(store, bias_)));
}

ad::Matrix sinusoidal_encoding(std::span<const std::size_t> positions, std::size_t dim) {
  ad::Matrix out(positions.size(), dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const double pos = static_cast<double>(positions[r]);
    for (std::size_t c = 0; c < dim; ++c) {
      const double pair = static_cast<double>(c / 2 * 2);
      const double angle = pos / std::pow(10000.0, pair / static_cast<double>(dim));
      out(r, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

ad::Value concat_streams(ad::Value cloud, ad::Value flow) {
  if (cloud.rows() != flow.rows()) {
    throw ShapeError(kModule, "stream lengths differ: " + cloud.shape().str() + " vs " +
                                  flow.shape().str());
  }
  return ad::concat_cols({cloud, flow});
}

ad::Matrix concat_streams(const ad::Matrix& cloud, const ad::Matrix& flow) {
  ad::Tape tape(false);
  return concat_streams(tape.constant(cloud), tape.constant(flow)).value();
}

double total_loss(std::span<const double> log_probs, int label, double mask_term, double beta) {
  check_label(label, log_probs.size());
  return -log_probs[static_cast<std::size_t>(label)] + beta * mask_term;
}

ad::Value total_loss(ad::Value log_probs, int label, std::optional<ad::Value> mask_term, double beta) {
  if (log_probs.rows() != 1) throw ShapeError(kModule, "total_loss expects 1 x C log-probabilities");
  check_label(label, log_probs.cols());
  ad::Value loss = ad::scale(ad::select(log_probs, 0, static_cast<std::size_t>(label)), -1.0);
  if (mask_term && beta != 0.0) loss = ad::add(loss, ad::scale(*mask_term, beta));
  return loss;
}

}  // namespace hdnet
