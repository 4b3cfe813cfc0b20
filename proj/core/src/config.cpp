#include "hdnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hdnet/error.hpp"

namespace hdnet {

namespace {

constexpr const char* kBetaAlias = "dfs.beta";
constexpr const char* kBetaKey = "loss.beta";

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && !text.empty();
}

bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0" || text == "no" || text == "off") {
    out = false;
    return true;
  }
  return false;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + text + "'");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

}  // namespace

RunConfig::RunConfig() {
  auto def = [this](const std::string& key, Kind kind, const std::string& value) {
    entries_[key] = {kind, value};
  };
  def("data.window", Kind::integer, "20");
  def("data.points", Kind::integer, "16");
  def("data.min_points", Kind::integer, "16");
  def("data.center", Kind::boolean, "false");
  def("data.seed", Kind::integer, "0");
  def("data.format", Kind::text, "auto");

  def("preprocess.eps", Kind::real, "0.5");
  def("preprocess.min_pts", Kind::integer, "10");
  def("track.max_gap", Kind::integer, "5");
  def("track.max_link_dist", Kind::real, "1.0");
  def("ingest.single_person", Kind::boolean, "true");

  def("model.k", Kind::integer, "8");
  def("model.width1", Kind::integer, "64");
  def("model.width2", Kind::integer, "128");
  def("model.embed_dim", Kind::integer, "128");
  def("model.kernel_hidden", Kind::integer, "16");
  def("model.use_flow", Kind::boolean, "true");
  def("model.strategy", Kind::text, "dfs");

  def("dfs.keep_ratio", Kind::real, "0.5");
  def("dfs.temperature", Kind::real, "1.0");
  def("dfs.anneal", Kind::boolean, "false");
  def("dfs.anneal_final", Kind::real, "0.1");
  def("dfs.hard", Kind::boolean, "true");
  def("dfs.hidden", Kind::integer, "64");
  def("dfs.inference", Kind::text, "threshold");
  def(kBetaKey, Kind::real, "0.5");

  def("ta.layers", Kind::integer, "2");
  def("ta.heads", Kind::integer, "4");
  def("ta.mlp_ratio", Kind::integer, "4");
  def("ta.positional", Kind::boolean, "false");

  def("train.epochs", Kind::integer, "50");
  def("train.batch_size", Kind::integer, "8");
  def("train.lr", Kind::real, "0.001");
  def("train.beta1", Kind::real, "0.9");
  def("train.beta2", Kind::real, "0.999");
  def("train.adam_eps", Kind::real, "1e-08");
  def("train.seed", Kind::integer, "1");
  def("train.eval_every", Kind::integer, "0");
  def("train.threads", Kind::integer, "1");
  def("train.split", Kind::text, "window");
  def("train.holdout", Kind::real, "0.2");

  def("cv.folds", Kind::integer, "5");

  def("sweep.ratios", Kind::real_list, "0.3,0.5,0.7,0.9");
  def("sweep.strategies", Kind::text_list, "dfs,random");
  def("sweep.seeds", Kind::integer_list, "1,2,3,4,5");
}

std::string RunConfig::canonical(const std::string& key) const {
  return key == kBetaAlias ? kBetaKey : key;
}

bool RunConfig::known(const std::string& key) const { return entries_.count(canonical(key)) != 0; }

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

void RunConfig::check_value(const std::string& key, Kind kind, const std::string& value) {
  bool ok = true;
  switch (kind) {
    case Kind::integer: {
      std::uint64_t v = 0;
      ok = parse_number(value, v);
      break;
    }
    case Kind::real: {
      double v = 0.0;
      ok = parse_number(value, v);
      break;
    }
    case Kind::boolean: {
      bool v = false;
      ok = parse_bool(value, v);
      break;
    }
    case Kind::text:
      ok = !value.empty();
      break;
    case Kind::real_list:
      for (const auto& item : split_list(value)) {
        double v = 0.0;
        ok = ok && parse_number(item, v);
      }
      ok = ok && !split_list(value).empty();
      break;
    case Kind::integer_list:
      for (const auto& item : split_list(value)) {
        std::uint64_t v = 0;
        ok = ok && parse_number(item, v);
      }
      ok = ok && !split_list(value).empty();
      break;
    case Kind::text_list:
      ok = !split_list(value).empty();
      break;
  }
  if (!ok) throw ConfigError("bad value '" + value + "' for key '" + key + "'");
}

void RunConfig::apply_layer(const std::vector<std::pair<std::string, std::string>>& layer,
                            const std::string& source) {
  std::map<std::string, std::pair<std::string, std::string>> staged;  // canonical -> (as written, value)
  for (const auto& [key, value] : layer) {
    const std::string name = canonical(key);
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError(source + ": unknown key '" + key + "'");
    check_value(key, it->second.kind, value);
    auto prior = staged.find(name);
    if (prior != staged.end() && prior->second.first != key && prior->second.second != value) {
      throw ConfigError(source + ": '" + prior->second.first + "' and '" + key +
                        "' are aliases but set to different values");
    }
    staged[name] = {key, value};
  }
  for (const auto& [name, kv] : staged) entries_[name].value = kv.second;
}

void RunConfig::load(std::istream& in, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> layer;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    layer.push_back(split_assignment(line, source + ":" + std::to_string(line_no)));
  }
  apply_layer(layer, source);
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  load(in, path.string());
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  std::vector<std::pair<std::string, std::string>> layer;
  for (const auto& a : assignments) layer.push_back(split_assignment(a, "--set"));
  apply_layer(layer, "--set");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  apply_layer({{key, value}}, "set");
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = entries_.find(canonical(key));
  if (it == entries_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second.value;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_number(get(key), v)) throw ConfigError("key '" + key + "' is not a number");
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_number(get(key), v)) throw ConfigError("key '" + key + "' is not a non-negative integer");
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  bool v = false;
  if (!parse_bool(get(key), v)) throw ConfigError("key '" + key + "' is not a boolean");
  return v;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) {
    double v = 0.0;
    if (!parse_number(item, v)) throw ConfigError("key '" + key + "' has a bad item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get(key))) {
    std::uint64_t v = 0;
    if (!parse_number(item, v)) throw ConfigError("key '" + key + "' has a bad item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const {
  return split_list(get(key));
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& [key, entry] : entries_) out << key << " = " << entry.value << '\n';
}

void RunConfig::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write(out);
}

ModelConfig RunConfig::model_config(std::size_t classes) const {
  ModelConfig m;
  m.classes = classes;
  m.backbone.k = get_size("model.k");
  m.backbone.width1 = get_size("model.width1");
  m.backbone.width2 = get_size("model.width2");
  m.backbone.embed_dim = get_size("model.embed_dim");
  m.backbone.kernel_hidden = get_size("model.kernel_hidden");
  m.use_flow = get_bool("model.use_flow");
  m.strategy = parse_strategy(get("model.strategy"));
  m.sampler.keep_ratio = get_double("dfs.keep_ratio");
  m.sampler.temperature = get_double("dfs.temperature");
  m.sampler.anneal = get_bool("dfs.anneal");
  m.sampler.anneal_final = get_double("dfs.anneal_final");
  m.sampler.hard = get_bool("dfs.hard");
  m.sampler.hidden = get_size("dfs.hidden");
  m.sampler.inference = parse_inference_rule(get("dfs.inference"));
  m.sampler.beta = get_double(kBetaKey);
  m.ta.layers = get_size("ta.layers");
  m.ta.heads = get_size("ta.heads");
  m.ta.mlp_ratio = get_size("ta.mlp_ratio");
  m.ta.positional = get_bool("ta.positional");
  if (classes > 0) m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = get_size("train.epochs");
  t.batch_size = get_size("train.batch_size");
  t.adam.lr = get_double("train.lr");
  t.adam.beta1 = get_double("train.beta1");
  t.adam.beta2 = get_double("train.beta2");
  t.adam.eps = get_double("train.adam_eps");
  t.seed = get_u64("train.seed");
  t.eval_every = get_size("train.eval_every");
  t.threads = std::max<std::size_t>(1, get_size("train.threads"));
  t.validate();
  return t;
}

IngestOptions RunConfig::ingest_options() const {
  IngestOptions o;
  o.tracker.eps = get_double("preprocess.eps");
  o.tracker.min_pts = get_size("preprocess.min_pts");
  o.tracker.max_gap = get_size("track.max_gap");
  o.tracker.max_link_dist = get_double("track.max_link_dist");
  o.single_person = get_bool("ingest.single_person");
  return o;
}

WindowOptions RunConfig::window_options() const {
  WindowOptions w;
  w.window = get_size("data.window");
  w.points = get_size("data.points");
  w.min_points = get_size("data.min_points");
  w.center = get_bool("data.center");
  w.seed = get_u64("data.seed");
  return w;
}

SplitMode RunConfig::split_mode() const { return parse_split_mode(get("train.split")); }

}  // namespace hdnet
