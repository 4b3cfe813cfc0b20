#include "hdnet/params.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"
#include "hdnet/stream_io.hpp"

namespace hdnet {

namespace {
constexpr const char* kModule = "params";
constexpr const char* kMagic = "hdnet-params v1";
}  // namespace

ParamStore::ParamStore(const ParamStore& other) {
  auto lock = other.read_lock();
  params_ = other.params_;
  index_ = other.index_;
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this == &other) return *this;
  auto theirs = other.read_lock();
  auto mine = write_lock();
  params_ = other.params_;
  index_ = other.index_;
  return *this;
}

std::size_t ParamStore::add(const std::string& name, ad::Matrix value, bool trainable) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw DataError(kModule, "invalid parameter name '" + name + "'");
  }
  if (index_.count(name)) throw DataError(kModule, "duplicate parameter name '" + name + "'");
  const std::size_t id = params_.size();
  ad::Matrix grad(value.rows(), value.cols());
  params_.push_back({name, std::move(value), std::move(grad), trainable});
  index_.emplace(name, id);
  return id;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError(kModule, "unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

std::vector<ad::Matrix> ParamStore::make_grad_buffers() const {
  std::vector<ad::Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.rows(), p.value.cols());
  return out;
}

void ParamStore::save(std::ostream& out) const {
  auto lock = read_lock();
  out << kMagic << '\n' << "count " << params_.size() << '\n';
  for (const auto& p : params_) {
    out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << ' '
        << (p.trainable ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (i) out << ' ';
      out << format_double(p.value[i]);
    }
    out << '\n';
  }
}

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  save(out);
}

ParamStore ParamStore::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw DataError(kModule, "not an hdnet parameter file (missing '" + std::string(kMagic) + "')");
  }
  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "count") throw DataError(kModule, "missing count line");

  ParamStore store;
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    int trainable = 1;
    if (!(in >> word >> name >> rows >> cols >> trainable) || word != "param") {
      throw DataError(kModule, "bad parameter header for record " + std::to_string(k));
    }
    ad::Matrix value(rows, cols);
    for (std::size_t i = 0; i < value.size(); ++i) {
      std::string token;
      if (!(in >> token)) throw DataError(kModule, "truncated values for '" + name + "'");
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value[i]);
      if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw DataError(kModule, "bad value '" + token + "' in '" + name + "'");
      }
    }
    store.add(name, std::move(value), trainable != 0);
  }
  return store;
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open " + path.string());
  return load(in);
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.size() != size()) throw DataError(kModule, "parameter count mismatch on assign");
  auto theirs = other.read_lock();
  auto mine = write_lock();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || !(src.value.shape() == dst.value.shape())) {
      throw DataError(kModule, "parameter '" + dst.name + "' does not match '" + src.name + "'");
    }
    dst.value = src.value;
  }
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.trainable != b.trainable || !(a.value == b.value)) return false;
  }
  return true;
}

ad::Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  ad::Matrix m(rows, cols);
  for (auto& x : m.values()) x = rng.uniform(-bound, bound);
  return m;
}

}  // namespace hdnet
