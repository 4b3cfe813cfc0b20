#include "hdnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"
#include "hdnet/stream_io.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "dataset";
constexpr const char* kMagic = "hdnet-dataset v1";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError(kModule, where + ": bad number '" + text + "'");
  }
  return value;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void expect_header(std::istream& in, const std::string& header, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(kModule, path.string() + ": missing header");
  strip_cr(line);
  if (line != header) {
    throw DataError(kModule, path.string() + ": expected header '" + header + "'");
  }
}

}  // namespace

std::vector<std::size_t> Dataset::groups() const {
  std::map<std::string, std::size_t> ids;
  for (const auto& i : info) ids.emplace(i.source, 0);
  std::size_t next = 0;
  for (auto& [name, id] : ids) id = next++;
  std::vector<std::size_t> out;
  out.reserve(info.size());
  for (const auto& i : info) out.push_back(ids.at(i.source));
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

void Dataset::validate() const {
  if (info.size() != samples.size()) throw DataError(kModule, "sample info is not parallel to samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::size_t size = frames * points * GaitSample::kChannels;
    if (s.frames != frames || s.points != points || s.cloud.size() != size || s.flow.size() != size) {
      throw DataError(kModule, "sample " + info[i].id + " does not have shape " +
                                   std::to_string(frames) + "x" + std::to_string(points));
    }
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes()) {
      throw DataError(kModule, "sample " + info[i].id + " has label " + std::to_string(s.label) +
                                   " outside [0, " + std::to_string(classes()) + ")");
    }
  }
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.frames = dataset.frames;
  out.points = dataset.points;
  out.class_names = dataset.class_names;
  out.samples.reserve(indices.size());
  out.info.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw DataError(kModule, "subset index out of range");
    out.samples.push_back(dataset.samples[i]);
    out.info.push_back(dataset.info[i]);
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "meta.txt");
    out << kMagic << '\n'
        << "frames " << dataset.frames << '\n'
        << "points " << dataset.points << '\n'
        << "classes " << dataset.classes() << '\n'
        << "samples " << dataset.size() << '\n';
  }
  {
    auto out = open_out(dir / "classes.csv");
    out << "label,subject_id\n";
    for (std::size_t c = 0; c < dataset.classes(); ++c) out << c << ',' << dataset.class_names[c] << '\n';
  }
  {
    auto out = open_out(dir / "index.csv");
    out << "sample_id,label,source_file,window_offset\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& info = dataset.info[i];
      out << info.id << ',' << dataset.samples[i].label << ',' << info.source << ','
          << info.window_offset << '\n';
    }
  }
  {
    auto out = open_out(dir / "samples.csv");
    out << "sample_id,t,n,cx,cy,cz,cv,fx,fy,fz,fa\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.samples[i];
      for (std::size_t t = 0; t < s.frames; ++t) {
        for (std::size_t n = 0; n < s.points; ++n) {
          out << dataset.info[i].id << ',' << t << ',' << n;
          for (std::size_t c = 0; c < GaitSample::kChannels; ++c) out << ',' << format_double(s.cloud_at(t, n, c));
          for (std::size_t c = 0; c < GaitSample::kChannels; ++c) out << ',' << format_double(s.flow_at(t, n, c));
          out << '\n';
        }
      }
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset dataset;
  std::size_t classes = 0, count = 0;
  {
    auto in = open_in(dir / "meta.txt");
    std::string line;
    std::getline(in, line);
    strip_cr(line);
    if (line != kMagic) throw DataError(kModule, (dir / "meta.txt").string() + ": not a dataset");
    std::map<std::string, std::size_t> fields;
    std::string key;
    std::size_t value = 0;
    while (in >> key >> value) fields[key] = value;
    for (const char* required : {"frames", "points", "classes", "samples"}) {
      if (!fields.count(required)) {
        throw DataError(kModule, (dir / "meta.txt").string() + ": missing '" + required + "'");
      }
    }
    dataset.frames = fields["frames"];
    dataset.points = fields["points"];
    classes = fields["classes"];
    count = fields["samples"];
  }
  {
    const auto path = dir / "classes.csv";
    auto in = open_in(path);
    expect_header(in, "label,subject_id", path);
    dataset.class_names.resize(classes);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const auto f = split_csv(line);
      const std::string where = path.string() + ":" + std::to_string(line_no);
      if (f.size() != 2) throw DataError(kModule, where + ": expected 2 fields");
      const auto label = parse_number<std::size_t>(f[0], where);
      if (label >= classes) throw DataError(kModule, where + ": label out of range");
      dataset.class_names[label] = f[1];
    }
  }
  std::map<std::string, std::size_t> position;
  {
    const auto path = dir / "index.csv";
    auto in = open_in(path);
    expect_header(in, "sample_id,label,source_file,window_offset", path);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const auto f = split_csv(line);
      const std::string where = path.string() + ":" + std::to_string(line_no);
      if (f.size() != 4) throw DataError(kModule, where + ": expected 4 fields");
      GaitSample sample;
      sample.frames = dataset.frames;
      sample.points = dataset.points;
      sample.label = parse_number<int>(f[1], where);
      const std::size_t size = dataset.frames * dataset.points * GaitSample::kChannels;
      sample.cloud.assign(size, 0.0);
      sample.flow.assign(size, 0.0);
      if (!position.emplace(f[0], dataset.samples.size()).second) {
        throw DataError(kModule, where + ": duplicate sample id '" + f[0] + "'");
      }
      dataset.samples.push_back(std::move(sample));
      dataset.info.push_back({f[0], f[2], parse_number<std::size_t>(f[3], where)});
    }
  }
  if (dataset.samples.size() != count) {
    throw DataError(kModule, "index lists " + std::to_string(dataset.samples.size()) +
                                 " samples, meta says " + std::to_string(count));
  }
  {
    const auto path = dir / "samples.csv";
    auto in = open_in(path);
    expect_header(in, "sample_id,t,n,cx,cy,cz,cv,fx,fy,fz,fa", path);
    std::vector<std::size_t> filled(dataset.size(), 0);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const auto f = split_csv(line);
      const std::string where = path.string() + ":" + std::to_string(line_no);
      if (f.size() != 11) throw DataError(kModule, where + ": expected 11 fields");
      auto it = position.find(f[0]);
      if (it == position.end()) throw DataError(kModule, where + ": unknown sample id '" + f[0] + "'");
      const auto t = parse_number<std::size_t>(f[1], where);
      const auto n = parse_number<std::size_t>(f[2], where);
      if (t >= dataset.frames || n >= dataset.points) throw DataError(kModule, where + ": index out of range");
      auto& sample = dataset.samples[it->second];
      const std::size_t base = (t * dataset.points + n) * GaitSample::kChannels;
      for (std::size_t c = 0; c < GaitSample::kChannels; ++c) {
        const double cv = parse_number<double>(f[3 + c], where);
        const double fv = parse_number<double>(f[7 + c], where);
        if (!std::isfinite(cv) || !std::isfinite(fv)) throw DataError(kModule, where + ": non-finite value");
        sample.cloud[base + c] = cv;
        sample.flow[base + c] = fv;
      }
      ++filled[it->second];
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (filled[i] != dataset.frames * dataset.points) {
        throw DataError(kModule, "sample " + dataset.info[i].id + " has " + std::to_string(filled[i]) +
                                     " point rows, expected " +
                                     std::to_string(dataset.frames * dataset.points));
      }
    }
  }
  dataset.validate();
  return dataset;
}

std::string to_string(SplitMode mode) { return mode == SplitMode::window ? "window" : "recording"; }

SplitMode parse_split_mode(const std::string& name) {
  if (name == "window") return SplitMode::window;
  if (name == "recording") return SplitMode::recording;
  throw ConfigError("unknown split mode '" + name + "' (expected window or recording)");
}

HoldoutSplit holdout_split(const Dataset& dataset, double fraction, std::uint64_t seed, SplitMode mode) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in (0, 1)");
  const auto groups = dataset.groups();
  // Units are samples (window mode) or recordings (recording mode), bucketed by class.
  std::vector<std::vector<std::size_t>> units(dataset.classes());
  std::vector<std::vector<std::size_t>> members;
  if (mode == SplitMode::window) {
    members.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      members[i] = {i};
      units[static_cast<std::size_t>(dataset.samples[i].label)].push_back(i);
    }
  } else {
    std::size_t group_count = 0;
    for (std::size_t g : groups) group_count = std::max(group_count, g + 1);
    members.resize(group_count);
    for (std::size_t i = 0; i < dataset.size(); ++i) members[groups[i]].push_back(i);
    for (std::size_t g = 0; g < group_count; ++g) {
      if (!members[g].empty()) {
        units[static_cast<std::size_t>(dataset.samples[members[g].front()].label)].push_back(g);
      }
    }
  }

  Rng rng(seed);
  HoldoutSplit split;
  for (auto& bucket : units) {
    rng.shuffle(std::span<std::size_t>(bucket));
    auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(bucket.size())));
    if (held == 0 && bucket.size() >= 2) held = 1;
    if (held >= bucket.size() && bucket.size() >= 1) held = bucket.size() - 1;
    for (std::size_t u = 0; u < bucket.size(); ++u) {
      auto& side = u < held ? split.test : split.train;
      side.insert(side.end(), members[bucket[u]].begin(), members[bucket[u]].end());
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace hdnet
