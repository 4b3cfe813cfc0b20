#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hdnet/point_cloud.hpp"

namespace hdnet {

/// Provenance of one sample.
struct SampleInfo {
  std::string id;
  std::string source;             ///< recording file name
  std::size_t window_offset = 0;  ///< first frame position within the filtered stream
};

/// Labelled windows with a fixed T x N shape.
///
/// On disk a dataset is a directory with four files:
///   meta.txt     `hdnet-dataset v1`, then `frames T`, `points N`, `classes C`, `samples S`
///   classes.csv  `label,subject_id`
///   index.csv    `sample_id,label,source_file,window_offset`
///   samples.csv  `sample_id,t,n,cx,cy,cz,cv,fx,fy,fz,fa` (one row per point)
struct Dataset {
  std::size_t frames = 0;
  std::size_t points = 0;
  std::vector<std::string> class_names;  ///< subject id per label
  std::vector<GaitSample> samples;
  std::vector<SampleInfo> info;  ///< parallel to `samples`

  std::size_t classes() const noexcept { return class_names.size(); }
  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Recording group per sample (dense ids ordered by source name).
  std::vector<std::size_t> groups() const;
  std::vector<int> labels() const;

  /// Checks shapes, label range and that `info` is parallel to `samples`.
  void validate() const;
};

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

enum class SplitMode {
  window,     ///< samples are split independently
  recording,  ///< all windows of one recording stay on the same side
};

std::string to_string(SplitMode mode);
SplitMode parse_split_mode(const std::string& name);

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-window mode holds out round(fraction * n_c) samples of every class c
/// (at least one when the class has two or more samples). Recording mode
/// holds out whole recordings per class in the same proportion. Both lists
/// are sorted.
HoldoutSplit holdout_split(const Dataset& dataset, double fraction, std::uint64_t seed,
                           SplitMode mode = SplitMode::window);

}  // namespace hdnet
