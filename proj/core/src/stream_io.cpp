#include "hdnet/stream_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hdnet/error.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "stream_io";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_field(std::string_view field, T& out) {
  field = trim(field);
  if (field.empty()) return false;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw DataError(kModule, source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::vector<PointRecord> read_point_records(std::istream& in, const std::string& source) {
  std::vector<PointRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (!seen_header) {
      if (line_no == 1 && view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF) {
        view.remove_prefix(3);  // UTF-8 BOM
      }
      if (view != kPointFileHeader) {
        fail(source, line_no, std::string("expected header '") + kPointFileHeader + "'");
      }
      seen_header = true;
      continue;
    }
    if (view.empty()) continue;

    std::string_view fields[6];
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = view.find(',', start);
      if (count == 6) fail(source, line_no, "too many fields");
      fields[count++] = view.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                            : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (count != 6) fail(source, line_no, "expected 6 fields, got " + std::to_string(count));

    PointRecord rec;
    if (!parse_field(fields[0], rec.frame_index)) fail(source, line_no, "bad frame_index");
    if (!parse_field(fields[1], rec.track_id) || rec.track_id < -1) {
      fail(source, line_no, "bad track_id");
    }
    double* coords[4] = {&rec.point.x, &rec.point.y, &rec.point.z, &rec.point.v};
    static constexpr const char* names[4] = {"x", "y", "z", "v"};
    for (int c = 0; c < 4; ++c) {
      if (!parse_field(fields[2 + c], *coords[c]) || !std::isfinite(*coords[c])) {
        fail(source, line_no, std::string("non-numeric or non-finite ") + names[c]);
      }
    }
    records.push_back(rec);
  }
  if (!seen_header) fail(source, 1, "missing header line");
  return records;
}

std::vector<PointRecord> read_point_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open " + path.string());
  return read_point_records(in, path.filename().string());
}

void write_point_records(std::ostream& out, const std::vector<PointRecord>& records) {
  out << kPointFileHeader << '\n';
  for (const auto& r : records) {
    out << r.frame_index << ',' << r.track_id << ',' << format_double(r.point.x) << ','
        << format_double(r.point.y) << ',' << format_double(r.point.z) << ','
        << format_double(r.point.v) << '\n';
  }
}

void write_stream(std::ostream& out, const PointStream& stream, std::int64_t track_id) {
  std::vector<PointRecord> records;
  for (const auto& frame : stream.frames) {
    for (const auto& p : frame.points) records.push_back({frame.index, track_id, p});
  }
  write_point_records(out, records);
}

void write_stream_file(const std::filesystem::path& path, const PointStream& stream,
                       std::int64_t track_id) {
  std::ofstream out(path);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  write_stream(out, stream, track_id);
}

std::vector<RadarFrame> group_frames(const std::vector<PointRecord>& records) {
  std::map<std::size_t, std::vector<RadarPoint>> by_frame;
  for (const auto& r : records) by_frame[r.frame_index].push_back(r.point);
  std::vector<RadarFrame> frames;
  frames.reserve(by_frame.size());
  for (auto& [index, points] : by_frame) frames.push_back({index, std::move(points)});
  return frames;
}

}  // namespace hdnet
