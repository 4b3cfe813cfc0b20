#include "hdnet/spatial_gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {
constexpr const char* kModule = "spatial_gnn";
}

FrameGraph knn_graph(const ad::Matrix& coords, std::size_t k) {
  const std::size_t n = coords.rows();
  if (coords.cols() < 3) throw ShapeError(kModule, "knn_graph needs at least 3 coordinate columns");
  if (k == 0 || k >= n) {
    throw ShapeError(kModule, "knn_graph needs 0 < k < N (k=" + std::to_string(k) +
                                  ", N=" + std::to_string(n) + ")");
  }
  FrameGraph graph{k, n, std::vector<std::size_t>(n * k)};
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = coords(j, 0) - coords(i, 0);
      const double dy = coords(j, 1) - coords(i, 1);
      const double dz = coords(j, 2) - coords(i, 2);
      cand.emplace_back(dx * dx + dy * dy + dz * dz, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t m = 0; m < k; ++m) graph.neighbors[i * k + m] = cand[m].second;
  }
  return graph;
}

EdgeIndex batch_edges(const std::vector<FrameGraph>& graphs) {
  EdgeIndex edges;
  if (graphs.empty()) return edges;
  edges.k = graphs.front().k;
  std::size_t offset = 0;
  for (const auto& g : graphs) {
    if (g.k != edges.k) throw ShapeError(kModule, "batched graphs must share k");
    for (std::size_t i = 0; i < g.points; ++i) {
      for (std::size_t m = 0; m < g.k; ++m) {
        edges.source.push_back(offset + i);
        edges.target.push_back(offset + g.neighbor(i, m));
      }
    }
    offset += g.points;
  }
  return edges;
}

AdaptiveConvLayer AdaptiveConvLayer::create(ParamStore& store, const std::string& prefix,
                                            std::size_t in, std::size_t out, std::size_t hidden,
                                            Rng& rng) {
  if (in == 0 || out == 0 || hidden == 0) throw ShapeError(kModule, "adaptive conv widths must be >= 1");
  const std::size_t kernel_cols = 3 + in;
  AdaptiveConvLayer layer;
  layer.in = in;
  layer.out = out;
  layer.hidden = hidden;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(2 * in));
  layer.gen1_weight = store.add(prefix + ".gen1.weight", uniform_matrix(2 * in, hidden, b1, rng));
  layer.gen1_bias = store.add(prefix + ".gen1.bias", uniform_matrix(1, hidden, b1, rng));
  // Second generator stage. Kernel entry (o, c) for an edge with hidden
  // activations h is sum_m h_m W[c](m * out + o) + bias(c, o), where W is
  // gen2.coord_weight for the 3 coordinate columns and gen2.feature_weight
  // for the `in` feature-difference columns.
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden * kernel_cols));
  const double bb = 1.0 / std::sqrt(static_cast<double>(kernel_cols));
  layer.gen2_coord_weight =
      store.add(prefix + ".gen2.coord_weight", uniform_matrix(3, hidden * out, b2, rng));
  layer.gen2_feature_weight =
      store.add(prefix + ".gen2.feature_weight", uniform_matrix(in, hidden * out, b2, rng));
  layer.gen2_bias = store.add(prefix + ".gen2.bias", uniform_matrix(kernel_cols, out, bb, rng));
  return layer;
}

ad::Value AdaptiveConvLayer::forward(ad::Tape& tape, const ParamStore& store, ad::Value features,
                                     const EdgeIndex& edges, ad::Value coord_delta) const {
  if (features.cols() != in) {
    throw ShapeError(kModule, "adaptive conv expects " + std::to_string(in) + " input channels, got " +
                                  features.shape().str());
  }
  if (coord_delta.rows() != edges.source.size() || coord_delta.cols() != 3) {
    throw ShapeError(kModule, "coordinate deltas " + coord_delta.shape().str() +
                                  " do not match edge count " + std::to_string(edges.source.size()));
  }
  if (edges.k == 0 || features.rows() * edges.k != edges.source.size()) {
    throw ShapeError(kModule, "edge index does not cover " + std::to_string(features.rows()) + " points");
  }
  const ad::Value fi = ad::gather_rows(features, edges.source);
  const ad::Value fj = ad::gather_rows(features, edges.target);
  const ad::Value df = ad::sub(fj, fi);
  const ad::Value edge_in = ad::concat_cols({fi, df});
  const ad::Value h = ad::gelu(ad::affine(edge_in, tape.param(store, gen1_weight),
                                          tape.param(store, gen1_bias)));
  // The kernel acts on [c_j - c_i, f_j - f_i]. Its feature part is linear in
  // f_j - f_i, so the weight product is formed once per point and
  // differenced per edge instead of building every edge's kernel.
  const ad::Value point_proj = ad::matmul(features, tape.param(store, gen2_feature_weight));
  const ad::Value delta = ad::concat_cols({coord_delta, df});
  const ad::Value responses =
      ad::add(ad::adaptive_edge_response(h, point_proj, coord_delta,
                                         tape.param(store, gen2_coord_weight), edges.source,
                                         edges.target),
              ad::matmul(delta, tape.param(store, gen2_bias)));
  return ad::gelu(ad::segment_max(responses, edges.k));
}

namespace {

ad::Matrix coordinate_deltas(const ad::Matrix& rows, const EdgeIndex& edges) {
  ad::Matrix delta(edges.source.size(), 3);
  for (std::size_t e = 0; e < edges.source.size(); ++e) {
    for (std::size_t c = 0; c < 3; ++c) {
      delta(e, c) = rows(edges.target[e], c) - rows(edges.source[e], c);
    }
  }
  return delta;
}

}  // namespace

ad::Value adaptive_graph_conv(ad::Tape& tape, const ParamStore& store, ad::Value features,
                              const ad::Matrix& coords, const FrameGraph& graph,
                              const AdaptiveConvLayer& layer) {
  if (coords.rows() != graph.points || features.rows() != graph.points) {
    throw ShapeError(kModule, "features/coords do not match graph of " +
                                  std::to_string(graph.points) + " points");
  }
  const EdgeIndex edges = batch_edges({graph});
  const ad::Value delta = tape.constant(coordinate_deltas(coords, edges));
  return layer.forward(tape, store, features, edges, delta);
}

SpatialBackbone::SpatialBackbone(const BackboneConfig& config, ParamStore& store,
                                 const std::string& prefix, Rng& rng)
    : config_(config) {
  if (config.width1 == 0 || config.width2 == 0 || config.embed_dim == 0 || config.k == 0) {
    throw ShapeError(kModule, "backbone widths and k must be >= 1");
  }
  conv1_ = AdaptiveConvLayer::create(store, prefix + ".conv1", kInputChannels, config.width1,
                                     config.kernel_hidden, rng);
  conv2_ = AdaptiveConvLayer::create(store, prefix + ".conv2", config.width1, config.width2,
                                     config.kernel_hidden, rng);
  const double b = 1.0 / std::sqrt(static_cast<double>(config.width2));
  head_weight_ = store.add(prefix + ".head.weight", uniform_matrix(config.width2, config.embed_dim, b, rng));
  head_bias_ = store.add(prefix + ".head.bias", uniform_matrix(1, config.embed_dim, b, rng));
}

ad::Value SpatialBackbone::forward(ad::Tape& tape, const ParamStore& store, const ad::Matrix& rows,
                                   std::size_t frames) const {
  if (frames == 0 || rows.rows() % frames != 0 || rows.cols() != kInputChannels) {
    throw ShapeError(kModule, "backbone input " + rows.shape().str() + " is not frames x N x 4 for " +
                                  std::to_string(frames) + " frames");
  }
  const std::size_t n = rows.rows() / frames;
  std::vector<FrameGraph> graphs;
  graphs.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    ad::Matrix coords(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 3; ++c) coords(i, c) = rows(t * n + i, c);
    }
    graphs.push_back(knn_graph(coords, config_.k));
  }
  const EdgeIndex edges = batch_edges(graphs);
  const ad::Value delta = tape.constant(coordinate_deltas(rows, edges));
  const ad::Value x = tape.constant(rows);
  const ad::Value h1 = conv1_.forward(tape, store, x, edges, delta);
  const ad::Value h2 = conv2_.forward(tape, store, h1, edges, delta);
  const ad::Value pooled = ad::segment_max(h2, n);
  return ad::affine(pooled, tape.param(store, head_weight_), tape.param(store, head_bias_));
}

}  // namespace hdnet
