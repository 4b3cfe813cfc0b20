#include "hdnet/point_cloud.hpp"

#include <cmath>
#include <limits>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "pointcloud";

bool finite(const RadarPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && std::isfinite(p.v);
}

}  // namespace

std::size_t nearest_point(const RadarPoint& p, std::span<const RadarPoint> candidates) {
  if (candidates.empty()) throw DataError(kModule, "nearest_point on an empty candidate set");
  std::size_t best = 0;
  double best_d = squared_distance(p, candidates[0]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double d = squared_distance(p, candidates[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

void validate_stream(const PointStream& stream) {
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const auto& frame = stream.frames[i];
    if (i > 0 && frame.index <= stream.frames[i - 1].index) {
      throw DataError(kModule, "frame indices not strictly increasing at frame " +
                                   std::to_string(frame.index));
    }
    for (const auto& p : frame.points) {
      if (!finite(p)) {
        throw DataError(kModule, "non-finite point in frame " + std::to_string(frame.index));
      }
    }
  }
}

std::vector<FlowFrame> compute_point_flow(const PointStream& stream) {
  if (stream.frames.empty()) throw DataError(kModule, "point flow needs at least one frame");
  for (const auto& frame : stream.frames) {
    if (frame.points.empty()) {
      throw DataError(kModule, "empty frame " + std::to_string(frame.index) + " in point flow input");
    }
  }

  std::vector<FlowFrame> out;
  out.reserve(stream.frames.size());
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const auto& frame = stream.frames[i];
    FlowFrame flow{frame.index, {}};
    flow.flows.reserve(frame.points.size());
    const bool last = i + 1 == stream.frames.size();
    for (const auto& p : frame.points) {
      double a = 0.0;
      if (!last) {
        const auto& next = stream.frames[i + 1].points;
        a = next[nearest_point(p, next)].v - p.v;
      }
      flow.flows.push_back({p.x, p.y, p.z, a});
    }
    out.push_back(std::move(flow));
  }
  return out;
}

PointStream filter_sparse_frames(const PointStream& stream, std::size_t min_points) {
  PointStream out;
  out.subject = stream.subject;
  for (const auto& frame : stream.frames) {
    if (frame.points.size() >= min_points) out.frames.push_back(frame);
  }
  return out;
}

std::vector<PointStream> window_stream(const PointStream& stream, std::size_t length) {
  if (length == 0) throw DataError(kModule, "window length must be >= 1");
  std::vector<PointStream> windows;
  const std::size_t count = stream.frames.size() / length;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    PointStream window;
    window.subject = stream.subject;
    const auto first = stream.frames.begin() + static_cast<std::ptrdiff_t>(w * length);
    window.frames.assign(first, first + static_cast<std::ptrdiff_t>(length));
    windows.push_back(std::move(window));
  }
  return windows;
}

std::vector<std::size_t> furthest_point_indices(std::span<const RadarPoint> points,
                                                std::size_t count, std::size_t first) {
  if (count == 0) throw DataError(kModule, "furthest point sampling needs count >= 1");
  if (points.size() < count) {
    throw DataError(kModule, "furthest point sampling asked for " + std::to_string(count) +
                                 " points from a frame of " + std::to_string(points.size()));
  }
  if (first >= points.size()) throw DataError(kModule, "furthest point sampling start out of range");

  std::vector<std::size_t> selected;
  selected.reserve(count);
  std::vector<double> min_dist(points.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(points.size(), false);

  std::size_t current = first;
  for (;;) {
    selected.push_back(current);
    taken[current] = true;
    if (selected.size() == count) break;
    std::size_t best = points.size();
    double best_d = -1.0;
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (taken[j]) continue;
      min_dist[j] = std::min(min_dist[j], squared_distance(points[current], points[j]));
      if (min_dist[j] > best_d) {
        best_d = min_dist[j];
        best = j;
      }
    }
    current = best;
  }
  return selected;
}

RadarFrame furthest_point_sample(const RadarFrame& frame, std::size_t count, std::uint64_t seed) {
  if (frame.points.size() < count) {
    throw DataError(kModule, "frame " + std::to_string(frame.index) + " has " +
                                 std::to_string(frame.points.size()) + " points, need " +
                                 std::to_string(count));
  }
  if (count == 0) throw DataError(kModule, "furthest point sampling needs count >= 1");
  Rng rng(seed);
  const std::size_t first = rng.below(frame.points.size());
  RadarFrame out{frame.index, {}};
  out.points.reserve(count);
  for (std::size_t idx : furthest_point_indices(frame.points, count, first)) {
    out.points.push_back(frame.points[idx]);
  }
  return out;
}

GaitSample build_sample(const PointStream& window, std::size_t points, std::uint64_t seed,
                        int label, const SampleOptions& options) {
  if (window.frames.empty()) throw DataError(kModule, "cannot build a sample from an empty window");

  PointStream sampled;
  sampled.subject = window.subject;
  sampled.frames.reserve(window.frames.size());
  for (std::size_t t = 0; t < window.frames.size(); ++t) {
    sampled.frames.push_back(furthest_point_sample(window.frames[t], points, seed));
  }

  if (options.center) {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    std::size_t n = 0;
    for (const auto& frame : sampled.frames) {
      for (const auto& p : frame.points) {
        cx += p.x;
        cy += p.y;
        cz += p.z;
        ++n;
      }
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    cz /= static_cast<double>(n);
    for (auto& frame : sampled.frames) {
      for (auto& p : frame.points) {
        p.x -= cx;
        p.y -= cy;
        p.z -= cz;
      }
    }
  }

  const auto flow = compute_point_flow(sampled);

  GaitSample sample;
  sample.frames = sampled.frames.size();
  sample.points = points;
  sample.label = label;
  sample.cloud.reserve(sample.frames * points * GaitSample::kChannels);
  sample.flow.reserve(sample.cloud.capacity());
  for (std::size_t t = 0; t < sample.frames; ++t) {
    for (std::size_t n = 0; n < points; ++n) {
      const auto& p = sampled.frames[t].points[n];
      const auto& f = flow[t].flows[n];
      sample.cloud.insert(sample.cloud.end(), {p.x, p.y, p.z, p.v});
      sample.flow.insert(sample.flow.end(), {f.x, f.y, f.z, f.a});
    }
  }
  return sample;
}

}  // namespace hdnet
