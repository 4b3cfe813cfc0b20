#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hdnet {

/// One radar detection: radar-relative position (m) and Doppler velocity (m/s).
struct RadarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double v = 0.0;

  bool operator==(const RadarPoint&) const = default;
};

struct RadarFrame {
  std::size_t index = 0;
  std::vector<RadarPoint> points;

  bool operator==(const RadarFrame&) const = default;
};

/// Time-ordered frames of one tracked target. Frame indices strictly increase.
struct PointStream {
  std::vector<RadarFrame> frames;
  std::optional<std::string> subject;

  bool operator==(const PointStream&) const = default;
};

/// Position of a source point plus the Doppler change to its nearest
/// neighbour in the following frame.
struct FlowPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double a = 0.0;

  bool operator==(const FlowPoint&) const = default;
};

struct FlowFrame {
  std::size_t index = 0;
  std::vector<FlowPoint> flows;
};

/// Fixed-size model input: a T x N x 4 cloud window, its T x N x 4 flow
/// window, and the subject class. Arrays are row-major (frame, point, channel).
struct GaitSample {
  static constexpr std::size_t kChannels = 4;

  std::size_t frames = 0;
  std::size_t points = 0;
  std::vector<double> cloud;
  std::vector<double> flow;
  int label = 0;

  double cloud_at(std::size_t t, std::size_t n, std::size_t c) const {
    return cloud[(t * points + n) * kChannels + c];
  }
  double flow_at(std::size_t t, std::size_t n, std::size_t c) const {
    return flow[(t * points + n) * kChannels + c];
  }

  bool operator==(const GaitSample&) const = default;
};

/// Squared Euclidean distance on (x, y, z).
inline double squared_distance(const RadarPoint& p, const RadarPoint& q) noexcept {
  const double dx = p.x - q.x;
  const double dy = p.y - q.y;
  const double dz = p.z - q.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Index of the candidate spatially closest to `p`; ties go to the lowest
/// index. `candidates` must be non-empty.
std::size_t nearest_point(const RadarPoint& p, std::span<const RadarPoint> candidates);

/// Throws DataError when a point is non-finite or frame indices do not
/// strictly increase.
void validate_stream(const PointStream& stream);

/// Point flow for every frame. The last frame has no successor and gets
/// a = 0 so the flow stream has the same length as the input.
std::vector<FlowFrame> compute_point_flow(const PointStream& stream);

/// Keeps frames with at least `min_points` points, order preserved.
PointStream filter_sparse_frames(const PointStream& stream, std::size_t min_points);

/// Non-overlapping windows of exactly `length` frames; a short tail is dropped.
std::vector<PointStream> window_stream(const PointStream& stream, std::size_t length);

/// Furthest point sampling with the first pick drawn from `seed`.
RadarFrame furthest_point_sample(const RadarFrame& frame, std::size_t count, std::uint64_t seed);

/// Furthest point sampling from a caller-chosen starting index. Returns the
/// selected source indices in selection order.
std::vector<std::size_t> furthest_point_indices(std::span<const RadarPoint> points,
                                                std::size_t count, std::size_t first);

struct SampleOptions {
  /// Subtract the window's mean (x, y, z) from every coordinate.
  bool center = false;
};

/// FPS on every frame with the same `seed` (so identical frames select
/// identical points), point flow on the sampled window, then packing.
GaitSample build_sample(const PointStream& window, std::size_t points, std::uint64_t seed,
                        int label, const SampleOptions& options = {});

}  // namespace hdnet
