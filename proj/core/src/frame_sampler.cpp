#include "hdnet/frame_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {
constexpr const char* kModule = "frame_sampler";
}

std::string to_string(InferenceRule rule) {
  return rule == InferenceRule::budget ? "budget" : "threshold";
}

InferenceRule parse_inference_rule(const std::string& name) {
  if (name == "threshold") return InferenceRule::threshold;
  if (name == "budget") return InferenceRule::budget;
  throw ConfigError("unknown dfs.inference '" + name + "' (expected threshold or budget)");
}

void SamplerConfig::validate() const {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("dfs.keep_ratio must be in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("dfs.temperature must be > 0");
  if (!(anneal_final > 0.0)) throw ConfigError("dfs.anneal_final must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("loss.beta must be >= 0");
  if (hidden == 0) throw ConfigError("dfs.hidden must be >= 1");
}

std::size_t KeepMask::kept() const {
  std::size_t n = 0;
  for (int k : keep) n += k != 0;
  return n;
}

double KeepMask::keep_fraction() const {
  return keep.empty() ? 0.0 : static_cast<double>(kept()) / static_cast<double>(keep.size());
}

FrameScorer::FrameScorer(std::size_t input_dim, std::size_t hidden, ParamStore& store,
                         const std::string& prefix, Rng& rng)
    : input_dim_(input_dim) {
  const double b1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fc1_weight_ = store.add(prefix + ".fc1.weight", uniform_matrix(input_dim, hidden, b1, rng));
  fc1_bias_ = store.add(prefix + ".fc1.bias", uniform_matrix(1, hidden, b1, rng));
  norm_gain_ = store.add(prefix + ".norm.gain", ad::Matrix(1, hidden, 1.0));
  norm_bias_ = store.add(prefix + ".norm.bias", ad::Matrix(1, hidden, 0.0));
  fc2_weight_ = store.add(prefix + ".fc2.weight", uniform_matrix(hidden, 2, b2, rng));
  fc2_bias_ = store.add(prefix + ".fc2.bias", ad::Matrix::from_rows({{2.0, -2.0}}));
}

ad::Value FrameScorer::logits(ad::Tape& tape, const ParamStore& store, ad::Value embeddings) const {
  if (embeddings.cols() != input_dim_) {
    throw ShapeError(kModule, "scorer expects " + std::to_string(input_dim_) + " features, got " +
                                  embeddings.shape().str());
  }
  ad::Value h = ad::affine(embeddings, tape.param(store, fc1_weight_), tape.param(store, fc1_bias_));
  h = ad::layer_norm(h, tape.param(store, norm_gain_), tape.param(store, norm_bias_));
  h = ad::gelu(h);
  return ad::affine(h, tape.param(store, fc2_weight_), tape.param(store, fc2_bias_));
}

FrameScores FrameScorer::score(const ParamStore& store, const ad::Matrix& embeddings) const {
  ad::Tape tape(false);
  const ad::Value z = logits(tape, store, tape.constant(embeddings));
  const ad::Value p = ad::softmax_rows(z);
  return {z.value(), p.value()};
}

ad::Matrix sample_gumbel_noise(std::size_t rows, Rng& rng) {
  ad::Matrix g(rows, 2);
  for (auto& x : g.values()) x = rng.gumbel();
  return g;
}

KeepMask gumbel_softmax(const ad::Matrix& probs, double tau, const ad::Matrix& noise, bool hard) {
  if (!(tau > 0.0)) throw DataError(kModule, "temperature must be > 0");
  if (probs.cols() != 2 || !(noise.shape() == probs.shape())) {
    throw ShapeError(kModule, "gumbel_softmax expects M x 2 probabilities and matching noise");
  }
  KeepMask mask;
  mask.temperature = tau;
  mask.soft = ad::Matrix(probs.rows(), 2);
  mask.keep.resize(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (!(probs(i, 0) > 0.0) || !(probs(i, 1) > 0.0)) {
      throw DataError(kModule, "non-positive probability in row " + std::to_string(i));
    }
    const double s0 = std::log(probs(i, 0)) + noise(i, 0);
    const double s1 = std::log(probs(i, 1)) + noise(i, 1);
    const double y0 = s0 / tau;
    const double y1 = s1 / tau;
    const double mx = std::max(y0, y1);
    const double e0 = std::exp(y0 - mx);
    const double e1 = std::exp(y1 - mx);
    mask.soft(i, 0) = e0 / (e0 + e1);
    mask.soft(i, 1) = e1 / (e0 + e1);
    mask.keep[i] = hard ? (s0 >= s1 ? 1 : 0) : (mask.soft(i, 0) >= 0.5 ? 1 : 0);
  }
  return mask;
}

RelaxedMask gumbel_softmax(ad::Tape& tape, ad::Value log_probs, const ad::Matrix& noise, double tau,
                           bool hard) {
  if (!(tau > 0.0)) throw DataError(kModule, "temperature must be > 0");
  if (log_probs.cols() != 2 || !(noise.shape() == log_probs.shape())) {
    throw ShapeError(kModule, "gumbel_softmax expects M x 2 log-probabilities and matching noise");
  }
  const ad::Value perturbed = ad::add(log_probs, tape.constant(noise));
  const ad::Value soft = ad::softmax_rows(ad::scale(perturbed, 1.0 / tau));
  const ad::Value keep_soft = ad::slice_cols(soft, 0, 1);

  RelaxedMask out;
  out.soft = soft;
  out.keep.resize(log_probs.rows());
  ad::Matrix hard_column(log_probs.rows(), 1);
  const ad::Matrix& s = perturbed.value();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const bool keep = hard ? s(i, 0) >= s(i, 1) : soft.value()(i, 0) >= 0.5;
    out.keep[i] = keep ? 1 : 0;
    hard_column[i] = keep ? 1.0 : 0.0;
  }
  out.keep_column = hard ? ad::straight_through(keep_soft, std::move(hard_column)) : keep_soft;
  return out;
}

std::vector<std::size_t> kept_rows(const std::vector<int>& keep, const std::vector<double>& keep_scores) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) rows.push_back(i);
  }
  if (rows.empty() && !keep.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < keep_scores.size(); ++i) {
      if (keep_scores[i] > keep_scores[best]) best = i;
    }
    rows.push_back(best);
  }
  return rows;
}

std::vector<std::size_t> top_rows(const std::vector<double>& keep_scores, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("keep ratio must be in (0, 1]");
  const std::size_t m = keep_scores.size();
  const auto want = std::min<std::size_t>(
      m, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(m) - 1e-9)));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keep_scores[a] > keep_scores[b]; });
  order.resize(std::max<std::size_t>(want, m > 0 ? 1 : 0));
  std::sort(order.begin(), order.end());
  return order;
}

ad::Value apply_mask_training(ad::Value embeddings, ad::Value keep_column) {
  return ad::row_scale(embeddings, keep_column);
}

ad::Value apply_mask_inference(ad::Value embeddings, const std::vector<std::size_t>& rows) {
  return ad::gather_rows(embeddings, rows);
}

ad::Matrix apply_mask(const ad::Matrix& embeddings, const KeepMask& mask, bool training) {
  if (mask.keep.size() != embeddings.rows()) {
    throw ShapeError(kModule, "mask length " + std::to_string(mask.keep.size()) +
                                  " does not match " + embeddings.shape().str());
  }
  if (training) {
    ad::Matrix out = embeddings;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (auto& v : out.row(r)) v *= mask.keep[r] ? 1.0 : 0.0;
    }
    return out;
  }
  std::vector<double> scores(mask.keep.size(), 0.0);
  for (std::size_t i = 0; i < scores.size() && i < mask.soft.rows(); ++i) scores[i] = mask.soft(i, 0);
  const auto rows = kept_rows(mask.keep, scores);
  ad::Matrix out(rows.size(), embeddings.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(embeddings.row(rows[i]).begin(), embeddings.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

double mask_loss(const KeepMask& mask, double target) {
  if (mask.keep.empty()) throw DataError(kModule, "mask loss needs a non-empty mask");
  const double d = target - mask.keep_fraction();
  return d * d;
}

ad::Value mask_loss(ad::Value keep_column, double target) {
  if (keep_column.rows() == 0) throw DataError(kModule, "mask loss needs a non-empty mask");
  const ad::Value diff = ad::add_scalar(ad::scale(ad::mean_all(keep_column), -1.0), target);
  return ad::mul(diff, diff);
}

double sampler_temperature(const SamplerConfig& config, std::size_t epoch, std::size_t epochs) {
  if (!config.anneal || epochs <= 1) return config.temperature;
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return config.temperature + (config.anneal_final - config.temperature) * progress;
}

}  // namespace hdnet
