#include "hdnet/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "ingest";

std::vector<PointStream> group_by_track(const std::vector<PointRecord>& records) {
  std::map<std::int64_t, std::vector<PointRecord>> by_track;
  for (const auto& r : records) {
    if (r.track_id < 0) {
      throw DataError(kModule, "tracked format requires track_id >= 0 on every record (frame " +
                                   std::to_string(r.frame_index) + ")");
    }
    by_track[r.track_id].push_back(r);
  }
  std::vector<PointStream> out;
  for (auto& [id, group] : by_track) {
    PointStream stream;
    stream.frames = group_frames(group);
    out.push_back(std::move(stream));
  }
  return out;
}

std::string stem_of(const std::string& file_name) {
  return std::filesystem::path(file_name).stem().string();
}

}  // namespace

IngestFormat parse_ingest_format(const std::string& id) {
  if (id == "tracked") return IngestFormat::tracked;
  if (id == "raw") return IngestFormat::raw;
  if (id == "auto") return IngestFormat::automatic;
  throw DataError(kModule, "unknown format id '" + id + "' (expected tracked, raw or auto)");
}

std::vector<PointStream> ingest_records(const std::vector<PointRecord>& records, IngestFormat format,
                                        const IngestOptions& options) {
  if (records.empty()) return {};
  if (format == IngestFormat::automatic) {
    const bool any_tracked = std::any_of(records.begin(), records.end(),
                                         [](const PointRecord& r) { return r.track_id >= 0; });
    const bool all_tracked = std::all_of(records.begin(), records.end(),
                                         [](const PointRecord& r) { return r.track_id >= 0; });
    if (any_tracked && !all_tracked) {
      throw DataError(kModule, "file mixes tracked and unassigned records; pick a format explicitly");
    }
    format = all_tracked ? IngestFormat::tracked : IngestFormat::raw;
  }
  if (format == IngestFormat::tracked) return group_by_track(records);

  std::vector<PointStream> streams = track_persons(group_frames(records), options.tracker);
  if (options.single_person && streams.size() > 1) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < streams.size(); ++i) {
      if (streams[i].frames.size() > streams[best].frames.size()) best = i;
    }
    PointStream keep = std::move(streams[best]);
    streams.clear();
    streams.push_back(std::move(keep));
  }
  return streams;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open manifest " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<ManifestEntry> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (line != "file_name,subject_id,environment") {
        throw DataError(kModule, path.string() + ":1: expected header 'file_name,subject_id,environment'");
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(kModule, path.string() + ":" + std::to_string(line_no) +
                                   ": expected file_name,subject_id,environment");
    }
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

std::vector<LabeledStream> ingest_directory(const std::filesystem::path& raw_dir,
                                            const std::filesystem::path& manifest, IngestFormat format,
                                            const IngestOptions& options) {
  auto entries = read_manifest(manifest);
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.file_name < b.file_name; });
  std::vector<LabeledStream> out;
  for (const auto& entry : entries) {
    const auto records = read_point_file(raw_dir / entry.file_name);
    for (auto& stream : ingest_records(records, format, options)) {
      stream.subject = entry.subject_id;
      out.push_back({std::move(stream), entry.subject_id, entry.file_name});
    }
  }
  return out;
}

Dataset build_dataset(const std::vector<LabeledStream>& streams, const WindowOptions& options) {
  if (options.window == 0 || options.points == 0) throw ConfigError("window and points must be >= 1");
  if (options.min_points < options.points) {
    throw ConfigError("data.min_points must be >= data.points so every frame can be sampled");
  }
  Dataset dataset;
  dataset.frames = options.window;
  dataset.points = options.points;

  std::set<std::string> subjects;
  for (const auto& s : streams) subjects.insert(s.subject);
  dataset.class_names.assign(subjects.begin(), subjects.end());
  std::map<std::string, int> label_of;
  for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
    label_of[dataset.class_names[c]] = static_cast<int>(c);
  }

  std::map<std::string, std::size_t> per_source;
  SampleOptions sample_options;
  sample_options.center = options.center;
  for (const auto& s : streams) {
    const std::size_t track = per_source[s.source]++;
    const PointStream filtered = filter_sparse_frames(s.stream, options.min_points);
    const auto windows = window_stream(filtered, options.window);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const std::size_t ordinal = dataset.samples.size();
      dataset.samples.push_back(build_sample(windows[w], options.points, mix_seed(options.seed, ordinal),
                                             label_of.at(s.subject), sample_options));
      SampleInfo info;
      info.id = stem_of(s.source) + "_t" + std::to_string(track) + "_w" + std::to_string(w);
      info.source = s.source;
      info.window_offset = w * options.window;
      dataset.info.push_back(std::move(info));
    }
  }
  return dataset;
}

}  // namespace hdnet
