#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hdnet/autodiff.hpp"
#include "hdnet/params.hpp"

namespace hdnet {

class Rng;

/// k nearest neighbours of every point by (x, y, z) distance, excluding the
/// point itself; ties go to the lowest index.
struct FrameGraph {
  std::size_t k = 0;
  std::size_t points = 0;
  std::vector<std::size_t> neighbors;  ///< points x k, row-major, nearest first

  std::size_t neighbor(std::size_t i, std::size_t m) const { return neighbors[i * k + m]; }
};

/// `coords` is N x 3 (extra columns are ignored). Throws when k >= N.
FrameGraph knn_graph(const ad::Matrix& coords, std::size_t k);

/// Flattened directed edges (i -> j) for a batch of independent frames.
/// Edges are grouped by source point, `k` per point, so a segment max over
/// groups of k aggregates each point's neighbourhood.
struct EdgeIndex {
  std::size_t k = 0;
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
};

/// Concatenates per-frame graphs whose points occupy consecutive blocks of
/// `points_per_frame` rows.
EdgeIndex batch_edges(const std::vector<FrameGraph>& graphs);

/// Adaptive edge convolution. For an edge (i, j) a generator network
///   e_ij = [f_i, f_j - f_i] -> affine -> GeLU -> affine
/// emits an out x (3 + in) kernel that is applied to [c_j - c_i, f_j - f_i].
/// Each point takes the max over its k edge responses, then GeLU.
struct AdaptiveConvLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t hidden = 0;
  std::size_t gen1_weight = 0;
  std::size_t gen1_bias = 0;
  std::size_t gen2_coord_weight = 0;
  std::size_t gen2_feature_weight = 0;
  std::size_t gen2_bias = 0;

  static AdaptiveConvLayer create(ParamStore& store, const std::string& prefix, std::size_t in,
                                  std::size_t out, std::size_t hidden, Rng& rng);

  /// `features`: P x in; `coord_delta`: E x 3 holding c_j - c_i per edge.
  ad::Value forward(ad::Tape& tape, const ParamStore& store, ad::Value features,
                    const EdgeIndex& edges, ad::Value coord_delta) const;
};

/// Single-frame convenience: builds edges from `graph` and `coords`.
ad::Value adaptive_graph_conv(ad::Tape& tape, const ParamStore& store, ad::Value features,
                              const ad::Matrix& coords, const FrameGraph& graph,
                              const AdaptiveConvLayer& layer);

struct BackboneConfig {
  std::size_t k = 8;
  std::size_t width1 = 64;
  std::size_t width2 = 128;
  std::size_t embed_dim = 128;
  /// Hidden width of the kernel generator network.
  std::size_t kernel_hidden = 16;
};

/// Per-frame encoder: kNN graph on (x, y, z), two adaptive convolutions on
/// the 4 input channels, max-pool over points, affine map to embed_dim.
class SpatialBackbone {
 public:
  static constexpr std::size_t kInputChannels = 4;

  SpatialBackbone() = default;
  SpatialBackbone(const BackboneConfig& config, ParamStore& store, const std::string& prefix,
                  Rng& rng);

  /// `rows`: (frames * N) x 4, frame-major. Returns frames x embed_dim.
  ad::Value forward(ad::Tape& tape, const ParamStore& store, const ad::Matrix& rows,
                    std::size_t frames) const;

  /// One frame (N x 4) to a 1 x embed_dim embedding.
  ad::Value forward_frame(ad::Tape& tape, const ParamStore& store, const ad::Matrix& frame) const {
    return forward(tape, store, frame, 1);
  }

  const BackboneConfig& config() const noexcept { return config_; }

 private:
  BackboneConfig config_;
  AdaptiveConvLayer conv1_;
  AdaptiveConvLayer conv2_;
  std::size_t head_weight_ = 0;
  std::size_t head_bias_ = 0;
};

}  // namespace hdnet
