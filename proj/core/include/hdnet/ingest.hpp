#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdnet/dataset.hpp"
#include "hdnet/point_cloud.hpp"
#include "hdnet/preprocess.hpp"
#include "hdnet/stream_io.hpp"

namespace hdnet {

/// How track ids in a point file are interpreted.
enum class IngestFormat {
  tracked,  ///< every record has track_id >= 0; streams are grouped by id
  raw,      ///< track ids ignored; people are separated by clustering + tracking
  automatic ///< tracked if every record has an id, raw if none has, error otherwise
};

/// Accepts "tracked", "raw" and "auto".
IngestFormat parse_ingest_format(const std::string& id);

struct IngestOptions {
  TrackerConfig tracker;
  /// For raw recordings keep only the longest track (earliest on ties),
  /// matching single-walker selection.
  bool single_person = true;
};

/// Streams of one file's records, in ascending track order (tracked) or
/// track creation order (raw).
std::vector<PointStream> ingest_records(const std::vector<PointRecord>& records, IngestFormat format,
                                        const IngestOptions& options = {});

struct ManifestEntry {
  std::string file_name;
  std::string subject_id;
  std::string environment;
};

/// `file_name,subject_id,environment` with a header line.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct LabeledStream {
  PointStream stream;
  std::string subject;
  std::string source;
};

/// Every manifest entry's file under `raw_dir`, in file-name order.
std::vector<LabeledStream> ingest_directory(const std::filesystem::path& raw_dir,
                                            const std::filesystem::path& manifest, IngestFormat format,
                                            const IngestOptions& options = {});

struct WindowOptions {
  std::size_t window = 20;      ///< frames per sample
  std::size_t points = 16;      ///< points per frame after sampling
  std::size_t min_points = 16;  ///< sparse-frame threshold
  bool center = false;
  std::uint64_t seed = 0;       ///< furthest-point-sampling seed
};

/// Filters sparse frames, cuts windows and builds samples. Labels follow the
/// sorted order of distinct subject ids.
Dataset build_dataset(const std::vector<LabeledStream>& streams, const WindowOptions& options);

}  // namespace hdnet
