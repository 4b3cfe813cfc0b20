#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hdnet/dataset.hpp"
#include "hdnet/ingest.hpp"
#include "hdnet/model.hpp"
#include "hdnet/training.hpp"

namespace hdnet {

/// Every tunable of the pipeline as typed `key = value` entries.
///
/// Values are resolved in layers: built-in defaults, then a config file, then
/// command-line overrides; a later layer wins. Unknown keys and values that
/// do not parse as the key's type are rejected. `dfs.beta` is an alias of
/// `loss.beta`; setting both to different values in one layer is an error.
class RunConfig {
 public:
  RunConfig();

  /// Reads `key = value` lines; `#` starts a comment, blank lines are skipped.
  void load_file(const std::filesystem::path& path);
  void load(std::istream& in, const std::string& source);
  /// Applies `key=value` assignments as one layer.
  void apply_overrides(const std::vector<std::string>& assignments);
  /// Sets a single key (its own layer).
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  bool known(const std::string& key) const;
  std::vector<std::string> keys() const;

  /// Resolved config, one `key = value` line per key in sorted order.
  void write(std::ostream& out) const;
  void write_file(const std::filesystem::path& path) const;

  ModelConfig model_config(std::size_t classes) const;
  TrainConfig train_config() const;
  IngestOptions ingest_options() const;
  WindowOptions window_options() const;
  SplitMode split_mode() const;

 private:
  enum class Kind { integer, real, boolean, text, real_list, integer_list, text_list };
  struct Entry {
    Kind kind;
    std::string value;
  };

  void apply_layer(const std::vector<std::pair<std::string, std::string>>& layer,
                   const std::string& source);
  std::string canonical(const std::string& key) const;
  static void check_value(const std::string& key, Kind kind, const std::string& value);

  std::map<std::string, Entry> entries_;
};

}  // namespace hdnet
