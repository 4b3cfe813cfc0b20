#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "hdnet/autodiff.hpp"

namespace hdnet {

class Rng;

struct Parameter {
  std::string name;
  ad::Matrix value;
  ad::Matrix grad;
  bool trainable = true;
};

/// Named, ordered collection of learnable matrices with gradient buffers.
///
/// Concurrent readers take `read_lock()`; anything that mutates values
/// (optimizer steps, loading) takes `write_lock()`.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);

  /// Registers a parameter; names must be unique.
  std::size_t add(const std::string& name, ad::Matrix value, bool trainable = true);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter& at(std::size_t i) { return params_[i]; }
  const Parameter& at(std::size_t i) const { return params_[i]; }
  Parameter& operator[](const std::string& name) { return params_[index(name)]; }
  const Parameter& operator[](const std::string& name) const { return params_[index(name)]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// Number of scalar coordinates over trainable parameters.
  std::size_t coordinate_count() const;
  /// Zeroed gradient buffers shaped like the parameters, in store order.
  std::vector<ad::Matrix> make_grad_buffers() const;

  std::shared_lock<std::shared_mutex> read_lock() const { return std::shared_lock(mutex_); }
  std::unique_lock<std::shared_mutex> write_lock() { return std::unique_lock(mutex_); }

  /// Text serialization, format `hdnet-params v1`:
  ///
  ///     hdnet-params v1
  ///     count <n>
  ///     param <name> <rows> <cols> <trainable 0|1>
  ///     <rows*cols values, row-major, shortest round-trip decimal>
  ///
  /// One `param` header line and one value line per parameter. Loading is
  /// exact (bitwise) for every finite double.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static ParamStore load(std::istream& in);
  static ParamStore load(const std::filesystem::path& path);

  /// Overwrites values from `other`; names and shapes must match exactly.
  void assign_values(const ParamStore& other);

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  mutable std::shared_mutex mutex_;
};

/// Uniform(-bound, bound) initialization.
ad::Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng);

}  // namespace hdnet
