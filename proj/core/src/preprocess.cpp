#include "hdnet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "preprocess";

double dist2(const Position& a, const Position& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

ClusterLabeling dbscan(std::span<const Position> points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw DataError(kModule, "dbscan eps must be > 0");
  if (min_pts < 1) throw DataError(kModule, "dbscan min_pts must be >= 1");

  const std::size_t n = points.size();
  const double eps2 = eps * eps;
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (dist2(points[i], points[j]) <= eps2) neighbors[i].push_back(j);
    }
  }

  ClusterLabeling out;
  out.labels.assign(n, ClusterLabeling::kNoise);
  std::vector<bool> visited(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] != ClusterLabeling::kNoise || neighbors[i].size() < min_pts) continue;
    const int cluster = out.clusters++;
    out.labels[i] = cluster;
    std::deque<std::size_t> frontier{i};
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      if (visited[p]) continue;
      visited[p] = true;
      for (std::size_t q : neighbors[p]) {
        if (out.labels[q] == ClusterLabeling::kNoise) {
          out.labels[q] = cluster;
          if (neighbors[q].size() >= min_pts) frontier.push_back(q);
        }
      }
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> hungarian_assign(std::span<const double> cost,
                                                                  std::size_t rows,
                                                                  std::size_t cols) {
  if (cost.size() != rows * cols) throw DataError(kModule, "cost matrix size mismatch");
  for (double c : cost) {
    if (!std::isfinite(c)) throw DataError(kModule, "hungarian_assign needs finite costs");
  }
  if (rows == 0 || cols == 0) return {};

  // Shortest augmenting path with potentials; requires n <= m.
  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto at = [&](std::size_t i, std::size_t j) {
    return transposed ? cost[j * cols + i] : cost[i * cols + j];
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n);
  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] == 0) continue;
    if (transposed) {
      pairs.emplace_back(j - 1, match[j] - 1);
    } else {
      pairs.emplace_back(match[j] - 1, j - 1);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

TrackingResult track_clusters(const std::vector<RadarFrame>& frames, const TrackerConfig& config) {
  if (!(config.eps > 0.0) || config.min_pts < 1 || !(config.max_link_dist > 0.0)) {
    throw DataError(kModule, "tracker parameters must be positive");
  }

  TrackingResult result;
  std::vector<std::size_t> open;  // indices into result.tracks

  for (const auto& frame : frames) {
    std::vector<Position> positions;
    positions.reserve(frame.points.size());
    for (const auto& p : frame.points) positions.push_back({p.x, p.y, p.z});
    const auto labeling = dbscan(positions, config.eps, config.min_pts);

    std::vector<Position> centroids(static_cast<std::size_t>(labeling.clusters), {0.0, 0.0, 0.0});
    std::vector<std::vector<std::size_t>> members(centroids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (labeling.labels[i] < 0) continue;
      const auto c = static_cast<std::size_t>(labeling.labels[i]);
      members[c].push_back(i);
      for (int d = 0; d < 3; ++d) centroids[c][d] += positions[i][d];
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      for (int d = 0; d < 3; ++d) centroids[c][d] /= static_cast<double>(members[c].size());
    }

    std::vector<bool> cluster_used(centroids.size(), false);
    std::vector<bool> track_matched(open.size(), false);
    if (!open.empty() && !centroids.empty()) {
      std::vector<double> cost(open.size() * centroids.size());
      for (std::size_t r = 0; r < open.size(); ++r) {
        const auto& last = result.tracks[open[r]].centroids.back();
        for (std::size_t c = 0; c < centroids.size(); ++c) {
          cost[r * centroids.size() + c] = std::sqrt(dist2(last, centroids[c]));
        }
      }
      for (auto [r, c] : hungarian_assign(cost, open.size(), centroids.size())) {
        if (cost[r * centroids.size() + c] > config.max_link_dist) continue;
        auto& track = result.tracks[open[r]];
        track.frames.push_back(frame.index);
        track.centroids.push_back(centroids[c]);
        track.members.push_back(members[c]);
        track.gap = 0;
        RadarFrame out{frame.index, {}};
        for (std::size_t i : members[c]) out.points.push_back(frame.points[i]);
        result.streams[open[r]].frames.push_back(std::move(out));
        track_matched[r] = true;
        cluster_used[c] = true;
      }
    }

    std::vector<std::size_t> still_open;
    for (std::size_t r = 0; r < open.size(); ++r) {
      auto& track = result.tracks[open[r]];
      if (!track_matched[r]) ++track.gap;
      if (track.gap <= config.max_gap) still_open.push_back(open[r]);
    }
    open = std::move(still_open);

    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (cluster_used[c]) continue;
      Track track;
      track.id = result.tracks.size();
      track.frames.push_back(frame.index);
      track.centroids.push_back(centroids[c]);
      track.members.push_back(members[c]);
      RadarFrame out{frame.index, {}};
      for (std::size_t i : members[c]) out.points.push_back(frame.points[i]);
      PointStream stream;
      stream.frames.push_back(std::move(out));
      open.push_back(result.tracks.size());
      result.tracks.push_back(std::move(track));
      result.streams.push_back(std::move(stream));
    }
  }
  return result;
}

std::vector<PointStream> track_persons(const std::vector<RadarFrame>& frames,
                                       const TrackerConfig& config) {
  return track_clusters(frames, config).streams;
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan kfold_split(std::size_t n_samples, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DataError(kModule, "k-fold needs k >= 2");
  if (n_samples < k) {
    throw DataError(kModule, "k-fold needs at least k samples (" + std::to_string(n_samples) +
                                 " < " + std::to_string(k) + ")");
  }
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x6b666f6c64ULL));
  rng.shuffle(std::span<std::size_t>(order));
  FoldPlan plan{k, std::vector<std::size_t>(n_samples)};
  for (std::size_t i = 0; i < n_samples; ++i) plan.fold_of[order[i]] = i % k;
  return plan;
}

FoldPlan kfold_split_grouped(std::span<const std::size_t> groups, std::size_t k,
                             std::uint64_t seed) {
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t g : groups) dense.emplace(g, dense.size());
  const FoldPlan group_plan = kfold_split(dense.size(), k, seed);
  FoldPlan plan{k, std::vector<std::size_t>(groups.size())};
  for (std::size_t i = 0; i < groups.size(); ++i) {
    plan.fold_of[i] = group_plan.fold_of[dense.at(groups[i])];
  }
  return plan;
}

}  // namespace hdnet
