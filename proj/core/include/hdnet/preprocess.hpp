#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hdnet/point_cloud.hpp"

namespace hdnet {

using Position = std::array<double, 3>;

struct ClusterLabeling {
  static constexpr int kNoise = -1;

  std::vector<int> labels;  ///< per point: cluster id >= 0 or kNoise
  int clusters = 0;
};

/// Density-based clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `eps` (inclusive). Points are scanned in
/// index order; a border point joins the first cluster that reaches it.
ClusterLabeling dbscan(std::span<const Position> points, double eps, std::size_t min_pts);

/// Minimum-cost assignment of min(rows, cols) pairs, returned sorted by row.
/// `cost` is row-major rows x cols.
std::vector<std::pair<std::size_t, std::size_t>> hungarian_assign(std::span<const double> cost,
                                                                  std::size_t rows,
                                                                  std::size_t cols);

struct TrackerConfig {
  double eps = 0.5;
  std::size_t min_pts = 10;
  std::size_t max_gap = 5;
  double max_link_dist = 1.0;
};

/// One person hypothesis across frames.
struct Track {
  std::size_t id = 0;
  std::vector<std::size_t> frames;        ///< frame indices, strictly increasing
  std::vector<Position> centroids;        ///< one per entry of `frames`
  std::vector<std::vector<std::size_t>> members;  ///< source point indices per frame
  std::size_t gap = 0;                    ///< consecutive frames without a match
};

/// Full tracking result; `streams[i]` holds the member points of `tracks[i]`.
struct TrackingResult {
  std::vector<Track> tracks;
  std::vector<PointStream> streams;
};

TrackingResult track_clusters(const std::vector<RadarFrame>& frames, const TrackerConfig& config);

/// Clusters each frame, links clusters across frames by Hungarian assignment
/// on centroid distance, and returns one stream per track in creation order.
std::vector<PointStream> track_persons(const std::vector<RadarFrame>& frames,
                                       const TrackerConfig& config);

/// Fold assignment for k-fold cross-validation.
struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Seeded shuffle, then round-robin into k folds.
FoldPlan kfold_split(std::size_t n_samples, std::size_t k, std::uint64_t seed);

/// Fold assignment where all samples sharing a group id land in the same
/// fold (groups are shuffled and dealt round-robin).
FoldPlan kfold_split_grouped(std::span<const std::size_t> groups, std::size_t k,
                             std::uint64_t seed);

}  // namespace hdnet
