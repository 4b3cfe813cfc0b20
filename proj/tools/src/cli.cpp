#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>

#include "hdnet/config.hpp"
#include "hdnet/dataset.hpp"
#include "hdnet/error.hpp"
#include "hdnet/ingest.hpp"
#include "hdnet/metrics.hpp"
#include "hdnet/model_check.hpp"
#include "hdnet/stream_io.hpp"
#include "hdnet/synth.hpp"
#include "hdnet/training.hpp"

namespace hdnet::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModule = "cli";

/// Options shared by every subcommand that reads the run configuration.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::size_t threads = 0;
  bool verbose = false;
};

void add_common(CLI::App& sub, CommonOptions& common) {
  sub.add_option("--config", common.config_file, "key = value config file")->check(CLI::ExistingFile);
  sub.add_option("--set", common.overrides, "override a config key (key=value), repeatable");
  sub.add_option("--threads", common.threads, "worker thread cap (overrides train.threads)");
  sub.add_flag("-v,--verbose", common.verbose, "print per-epoch progress");
}

RunConfig resolve_config(const CommonOptions& common) {
  RunConfig config;
  if (!common.config_file.empty()) config.load_file(common.config_file);
  config.apply_overrides(common.overrides);
  if (common.threads > 0) config.set("train.threads", std::to_string(common.threads));
  return config;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  return out;
}

/// Accepts a dataset directory or a directory holding `dataset/`.
Dataset load_data(const fs::path& path) {
  if (fs::exists(path / "meta.txt")) return load_dataset(path);
  if (fs::exists(path / "dataset" / "meta.txt")) return load_dataset(path / "dataset");
  throw DataError(kModule, "no dataset found at " + path.string());
}

void write_classes(const fs::path& path, const Dataset& data) {
  auto out = open_out(path);
  out << "label,subject_id\n";
  for (std::size_t c = 0; c < data.classes(); ++c) out << c << ',' << data.class_names[c] << '\n';
}

std::vector<std::string> read_classes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(kModule, path.string() + ": malformed line");
    names.push_back(line.substr(comma + 1));
  }
  return names;
}

void write_history(const fs::path& path, const std::vector<EpochRecord>& history) {
  auto out = open_out(path);
  out << "epoch,loss,keep_fraction,accuracy,eval_accuracy,temperature\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.keep_fraction) << ','
        << (r.train_accuracy ? format_double(*r.train_accuracy) : "") << ','
        << (r.eval_accuracy ? format_double(*r.eval_accuracy) : "") << ','
        << format_double(r.temperature) << '\n';
  }
}

void write_report(const fs::path& dir, const std::string& stem, const MetricReport& report) {
  {
    auto out = open_out(dir / (stem + ".csv"));
    write_metrics_csv(out, report);
  }
  auto out = open_out(dir / (stem + "_confusion.csv"));
  write_confusion_csv(out, report.confusion);
}

void print_report(std::ostream& out, const std::string& title, const MetricReport& r) {
  out << title << ": accuracy " << format_double(r.accuracy) << ", precision "
      << format_double(r.precision) << ", recall " << format_double(r.recall) << ", f1 "
      << format_double(r.f1) << " (" << r.confusion.total() << " samples)\n";
}

EpochCallback progress(std::ostream& out, bool verbose) {
  if (!verbose) return {};
  return [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << format_double(r.loss) << " keep "
        << format_double(r.keep_fraction);
    if (r.train_accuracy) out << " train_acc " << format_double(*r.train_accuracy);
    if (r.eval_accuracy) out << " eval_acc " << format_double(*r.eval_accuracy);
    out << '\n';
  };
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  CommonOptions common;
  std::string raw_dir;
  std::string manifest;
  std::string format;
  std::string out;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const RunConfig config = resolve_config(a.common);
  const fs::path manifest = a.manifest.empty() ? fs::path(a.raw_dir) / "manifest.csv" : fs::path(a.manifest);
  const IngestFormat format = parse_ingest_format(a.format.empty() ? config.get("data.format") : a.format);
  const auto streams = ingest_directory(a.raw_dir, manifest, format, config.ingest_options());
  const Dataset data = build_dataset(streams, config.window_options());
  save_dataset(data, a.out);
  out << "ingested " << streams.size() << " streams into " << data.size() << " samples across "
      << data.classes() << " classes -> " << a.out << '\n';
  return 0;
}

struct SynthArgs {
  CommonOptions common;
  std::size_t classes = 5;
  std::size_t per_class = 20;
  double noise_fraction = 0.0;
  std::uint64_t seed = 0;
  double fps = 10.0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const RunConfig config = resolve_config(a.common);
  SynthConfig synth;
  synth.classes = a.classes;
  synth.per_class = a.per_class;
  synth.noise_fraction = a.noise_fraction;
  synth.seed = a.seed;
  synth.fps = a.fps;
  synth.frames = config.get_size("data.window");
  const fs::path root(a.out);
  const fs::path raw = root / "raw";
  write_recordings(synthesize_recordings(synth), raw);

  // Same path as real recordings: point files plus manifest through ingest.
  const auto streams = ingest_directory(raw, raw / "manifest.csv", IngestFormat::tracked,
                                        config.ingest_options());
  const Dataset data = build_dataset(streams, config.window_options());
  save_dataset(data, root / "dataset");
  out << "synthesized " << data.size() << " samples (" << data.classes() << " classes, noise fraction "
      << format_double(a.noise_fraction) << ") -> " << (root / "dataset").string() << '\n';
  return 0;
}

struct TrainArgs {
  CommonOptions common;
  std::string data;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig config = resolve_config(a.common);
  const Dataset data = load_data(a.data);
  const ModelConfig model = config.model_config(data.classes());
  const TrainConfig train_cfg = config.train_config();
  const double holdout = config.get_double("train.holdout");

  const fs::path dir(a.out);
  fs::create_directories(dir);
  config.write_file(dir / "config.txt");
  write_classes(dir / "classes.csv", data);

  std::vector<std::size_t> train_ids, test_ids;
  if (holdout > 0.0) {
    const HoldoutSplit split = holdout_split(data, holdout, train_cfg.seed, config.split_mode());
    train_ids = split.train;
    test_ids = split.test;
  } else {
    train_ids.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) train_ids[i] = i;
  }
  {
    auto split_out = open_out(dir / "split.csv");
    split_out << "sample_id,side\n";
    for (std::size_t i : train_ids) split_out << data.info[i].id << ",train\n";
    for (std::size_t i : test_ids) split_out << data.info[i].id << ",test\n";
  }
  const Dataset train_set = subset(data, train_ids);
  const Dataset test_set = subset(data, test_ids);

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result =
      train(model, train_cfg, train_set, test_set.empty() ? nullptr : &test_set, progress(out, a.common.verbose));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  result.params.save(dir / "model.params");
  write_history(dir / "history.csv", result.history);
  const MetricReport train_report = evaluate(model, result.params, train_set, train_cfg.seed, train_cfg.threads);
  write_report(dir, "train_metrics", train_report);
  print_report(out, "train", train_report);
  if (!test_set.empty()) {
    const MetricReport test_report = evaluate(model, result.params, test_set, train_cfg.seed, train_cfg.threads);
    write_report(dir, "metrics", test_report);
    print_report(out, "held-out", test_report);
  } else {
    write_report(dir, "metrics", train_report);
  }
  out << "trained " << train_cfg.epochs << " epochs in " << format_double(seconds) << " s -> " << a.out << '\n';
  return 0;
}

struct EvalArgs {
  CommonOptions common;
  std::string run;
  std::string data;
  std::string subset_name = "test";
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const fs::path run(a.run);
  RunConfig config;
  config.load_file(run / "config.txt");
  config.apply_overrides(a.common.overrides);
  if (a.common.threads > 0) config.set("train.threads", std::to_string(a.common.threads));

  const Dataset data = load_data(a.data);
  if (read_classes(run / "classes.csv") != data.class_names) {
    throw DataError(kModule, "dataset classes do not match the trained run");
  }
  std::vector<std::size_t> ids;
  if (a.subset_name == "all") {
    for (std::size_t i = 0; i < data.size(); ++i) ids.push_back(i);
  } else {
    std::ifstream in(run / "split.csv");
    if (!in) throw DataError(kModule, "run has no split.csv; use --subset all");
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < data.size(); ++i) position[data.info[i].id] = i;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos || line.substr(comma + 1) != a.subset_name) continue;
      auto it = position.find(line.substr(0, comma));
      if (it == position.end()) throw DataError(kModule, "sample '" + line.substr(0, comma) + "' not in dataset");
      ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw DataError(kModule, "no samples selected for evaluation");

  const ModelConfig model = config.model_config(data.classes());
  const ParamStore params = ParamStore::load(run / "model.params");
  const TrainConfig train_cfg = config.train_config();
  const MetricReport report = evaluate(model, params, subset(data, ids), train_cfg.seed, train_cfg.threads);
  const fs::path dir = a.out.empty() ? run : fs::path(a.out);
  fs::create_directories(dir);
  write_report(dir, "eval_metrics", report);
  print_report(out, "eval (" + a.subset_name + ")", report);
  return 0;
}

struct CvArgs {
  CommonOptions common;
  std::string data;
  std::string out;
};

int cmd_cv(const CvArgs& a, std::ostream& out) {
  const RunConfig config = resolve_config(a.common);
  const Dataset data = load_data(a.data);
  const ModelConfig model = config.model_config(data.classes());
  const TrainConfig train_cfg = config.train_config();
  const std::size_t folds = config.get_size("cv.folds");

  const fs::path dir(a.out);
  fs::create_directories(dir);
  config.write_file(dir / "config.txt");
  write_classes(dir / "classes.csv", data);
  const CrossValidationResult cv = cross_validate(model, train_cfg, data, folds, config.split_mode(), dir);
  {
    auto f = open_out(dir / "folds.csv");
    write_fold_csv(f, cv.summary);
  }
  {
    auto f = open_out(dir / "fold_assignment.csv");
    f << "sample_id,fold\n";
    for (std::size_t k = 0; k < cv.test_indices.size(); ++k) {
      for (std::size_t i : cv.test_indices[k]) f << data.info[i].id << ',' << k << '\n';
    }
  }
  {
    auto f = open_out(dir / "metrics.csv");
    f << "metric,mean,std\n"
      << "accuracy," << format_double(cv.summary.accuracy.mean) << ',' << format_double(cv.summary.accuracy.stddev) << '\n'
      << "precision," << format_double(cv.summary.precision.mean) << ',' << format_double(cv.summary.precision.stddev) << '\n'
      << "recall," << format_double(cv.summary.recall.mean) << ',' << format_double(cv.summary.recall.stddev) << '\n'
      << "f1," << format_double(cv.summary.f1.mean) << ',' << format_double(cv.summary.f1.stddev) << '\n';
  }
  for (std::size_t k = 0; k < cv.summary.folds.size(); ++k) {
    print_report(out, "fold " + std::to_string(k), cv.summary.folds[k]);
  }
  out << "accuracy " << format_double(cv.summary.accuracy.mean) << " +- "
      << format_double(cv.summary.accuracy.stddev) << ", f1 " << format_double(cv.summary.f1.mean) << " +- "
      << format_double(cv.summary.f1.stddev) << '\n';
  return 0;
}

struct SweepArgs {
  CommonOptions common;
  std::string data;
  std::string out;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const RunConfig config = resolve_config(a.common);
  const Dataset data = load_data(a.data);
  const ModelConfig model = config.model_config(data.classes());
  const TrainConfig train_cfg = config.train_config();
  const HoldoutSplit split = holdout_split(data, config.get_double("train.holdout"), train_cfg.seed,
                                           config.split_mode());
  std::vector<SamplingStrategy> strategies;
  for (const auto& name : config.get_string_list("sweep.strategies")) strategies.push_back(parse_strategy(name));

  const fs::path dir(a.out);
  fs::create_directories(dir);
  config.write_file(dir / "config.txt");
  const auto rows = ratio_sweep(model, train_cfg, subset(data, split.train), subset(data, split.test),
                                config.get_double_list("sweep.ratios"), strategies,
                                config.get_u64_list("sweep.seeds"));
  {
    auto f = open_out(dir / "sweep.csv");
    f << "ratio,strategy,seed,accuracy,keep_fraction\n";
    for (const auto& r : rows) {
      f << format_double(r.ratio) << ',' << to_string(r.strategy) << ',' << r.seed << ','
        << format_double(r.accuracy) << ',' << format_double(r.keep_fraction) << '\n';
    }
  }
  std::map<std::pair<double, std::string>, std::vector<double>> cells;
  for (const auto& r : rows) cells[{r.ratio, to_string(r.strategy)}].push_back(r.accuracy);
  auto f = open_out(dir / "sweep_summary.csv");
  f << "ratio,strategy,runs,mean_accuracy,std_accuracy\n";
  for (const auto& [key, values] : cells) {
    const MeanStd ms = mean_std(values);
    f << format_double(key.first) << ',' << key.second << ',' << values.size() << ','
      << format_double(ms.mean) << ',' << format_double(ms.stddev) << '\n';
    out << "ratio " << format_double(key.first) << ' ' << key.second << ": accuracy "
        << format_double(ms.mean) << " +- " << format_double(ms.stddev) << '\n';
  }
  return 0;
}

struct GradcheckArgs {
  CommonOptions common;
  std::size_t samples = 2;
  std::size_t frames = 8;
  std::size_t points = 16;
  std::size_t coordinates = 200;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const RunConfig config = resolve_config(a.common);
  ModelCheckOptions options;
  options.samples = a.samples;
  options.frames = a.frames;
  options.points = a.points;
  options.seed = a.seed;
  options.grad.coordinates = a.coordinates;
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport report = check_model_gradients(config.model_config(2), options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "max relative error " << format_double(report.max_relative_error) << " over " << report.checked
      << " coordinates (" << report.skipped_at_kinks << " skipped at max-pool kinks), worst "
      << report.worst_parameter << '[' << report.worst_index << "], " << format_double(seconds) << " s\n";
  if (!(report.max_relative_error < a.tolerance)) {
    throw NumericError("gradcheck", "max relative error " + format_double(report.max_relative_error) +
                                        " exceeds tolerance " + format_double(a.tolerance));
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"HDNet radar gait recognition pipeline", "hdnet"};
  app.require_subcommand(1);
  app.fallthrough(false);

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "turn raw point files plus a manifest into a dataset directory");
  add_common(*ingest, ingest_args.common);
  ingest->add_option("--raw", ingest_args.raw_dir, "directory of point files")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--manifest", ingest_args.manifest, "manifest CSV (default <raw>/manifest.csv)");
  ingest->add_option("--format", ingest_args.format, "tracked, raw or auto (default data.format)");
  ingest->add_option("--out", ingest_args.out, "dataset directory")->required();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic gait dataset");
  add_common(*synth, synth_args.common);
  synth->add_option("--classes", synth_args.classes, "number of subjects")->check(CLI::PositiveNumber);
  synth->add_option("--per-class", synth_args.per_class, "recordings per subject")->check(CLI::PositiveNumber);
  synth->add_option("--noise-fraction", synth_args.noise_fraction, "fraction of frames replaced by clutter")
      ->check(CLI::Range(0.0, 0.999999));
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--fps", synth_args.fps, "frame rate")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_args.out, "output directory (raw/ and dataset/)")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model with a held-out split");
  add_common(*train_cmd, train_args.common);
  train_cmd->add_option("--data", train_args.data, "dataset directory")->required();
  train_cmd->add_option("--out", train_args.out, "run directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  add_common(*eval_cmd, eval_args.common);
  eval_cmd->add_option("--run", eval_args.run, "run directory from `train`")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--data", eval_args.data, "dataset directory")->required();
  eval_cmd->add_option("--subset", eval_args.subset_name, "test, train or all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  eval_cmd->add_option("--out", eval_args.out, "output directory (default: the run directory)");

  CvArgs cv_args;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  add_common(*cv_cmd, cv_args.common);
  cv_cmd->add_option("--data", cv_args.data, "dataset directory")->required();
  cv_cmd->add_option("--out", cv_args.out, "run directory")->required();

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "keep-ratio sweep over sampling strategies");
  add_common(*sweep_cmd, sweep_args.common);
  sweep_cmd->add_option("--data", sweep_args.data, "dataset directory")->required();
  sweep_cmd->add_option("--out", sweep_args.out, "run directory")->required();

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
  add_common(*grad_cmd, grad_args.common);
  grad_cmd->add_option("--samples", grad_args.samples, "batch size")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--frames", grad_args.frames, "frames per sample")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--points", grad_args.points, "points per frame")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--coordinates", grad_args.coordinates, "coordinates probed")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_args.seed, "weight and data seed");
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "hdnet: " << e.what() << "\n\n" << app.help();
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*ingest) return cmd_ingest(ingest_args, out);
    if (*synth) return cmd_synth(synth_args, out);
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*cv_cmd) return cmd_cv(cv_args, out);
    if (*sweep_cmd) return cmd_sweep(sweep_args, out);
    if (*grad_cmd) return cmd_gradcheck(grad_args, out);
  } catch (const Error& e) {
    err << "hdnet: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "hdnet: filesystem: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  } catch (const std::exception& e) {
    err << "hdnet: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::numeric);
  }
  err << app.help();
  return static_cast<int>(ErrorKind::usage);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"hdnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hdnet::cli
