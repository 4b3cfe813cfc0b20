#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hdnet/point_cloud.hpp"

namespace hdnet {

/// One line of a point file: `frame_index,track_id,x,y,z,v`.
struct PointRecord {
  std::size_t frame_index = 0;
  std::int64_t track_id = -1;
  RadarPoint point;
};

inline constexpr const char* kPointFileHeader = "frame_index,track_id,x,y,z,v";

/// Parses a point file. The header line is mandatory. Errors name the line.
std::vector<PointRecord> read_point_records(std::istream& in, const std::string& source = "<stream>");
std::vector<PointRecord> read_point_file(const std::filesystem::path& path);

void write_point_records(std::ostream& out, const std::vector<PointRecord>& records);

/// Writes every point of `stream` under one track id (-1 for unassigned).
void write_stream(std::ostream& out, const PointStream& stream, std::int64_t track_id);
void write_stream_file(const std::filesystem::path& path, const PointStream& stream,
                       std::int64_t track_id);

/// Groups records into frames (ascending frame index, file order within a
/// frame). Frames with no records are absent.
std::vector<RadarFrame> group_frames(const std::vector<PointRecord>& records);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace hdnet
