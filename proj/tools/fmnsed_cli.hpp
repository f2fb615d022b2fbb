#pragma once

// Command-line front end. run_cli() is the whole program minus process setup
// so tests can drive it in-process.
//
// Exit codes: 0 ok, 1 internal error, 2 usage, 3 weight mismatch,
// 4 data or vocabulary error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fmnsed.hpp"

namespace fmnsed::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";

enum ExitCode : int { ok = 0, internal = 1, usage = 2, weight_mismatch = 3, data_error = 4 };

/// Usage failure raised by command validation after parsing succeeded.
struct UsageError : Error {
  using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct RunManifest {
  std::string command;
  std::string model_name;
  json config;  ///< everything that determines the result
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  /// Hash of the canonical (key-sorted) config dump.
  std::string config_hash() const { return hex64(fnv1a64(config.dump())); }

  json to_json() const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return {{"command", command},
            {"model_name", model_name},
            {"config_hash", config_hash()},
            {"config", config},
            {"inputs", inputs},
            {"outputs", outputs},
            {"timestamp", stamp},
            {"toolkit_version", kToolkitVersion}};
  }
};

/// Writes `<primary output>.manifest.json`. Commands without a file output
/// write nothing.
inline void write_manifest(const RunManifest& m) {
  if (m.outputs.empty()) return;
  const fs::path path = m.outputs.front() + ".manifest.json";
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest '" + path.string() + "'");
  f << m.to_json().dump(2) << '\n';
}

/// Non-grid architecture settings:
///   {"alpha": 1.0, "kind": "TF", "hidden": 256, "num_blocks": 2, "num_heads": 0,
///    "state_dim": 64, "num_classes": 447}
inline ModelSpec spec_from_json(const json& j) {
  try {
    ModelSpec spec;
    spec.fmn = build_fmn(j.value("alpha", 1.0));
    const auto kind = parse_seq_kind(j.value("kind", std::string("NONE")));
    if (!kind) throw UsageError("config: unknown sequence kind '" + j.value("kind", std::string()) + "'");
    spec.seq.kind = *kind;
    spec.seq.hidden_dim = j.value("hidden", std::size_t{256});
    spec.seq.num_blocks = j.value("num_blocks", std::size_t{2});
    spec.seq.num_heads = j.value("num_heads", std::size_t{0});
    spec.seq.state_dim = j.value("state_dim", std::size_t{64});
    spec.num_classes = j.value("num_classes", kTrainClasses);
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const ShapeError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

inline json spec_to_json(const ModelSpec& s) {
  return {{"alpha", s.fmn.alpha},          {"kind", seq_kind_name(s.seq.kind)}, {"hidden", s.seq.hidden_dim},
          {"num_blocks", s.seq.num_blocks}, {"num_heads", s.seq.heads()},       {"state_dim", s.seq.state_dim},
          {"num_classes", s.num_classes}};
}

struct ModelArgs {
  std::string name;
  std::string config_path;

  ModelSpec resolve() const {
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw UsageError("cannot open config '" + config_path + "'");
      json j;
      try {
        j = json::parse(f);
      } catch (const json::exception& e) {
        throw UsageError("config '" + config_path + "': " + e.what());
      }
      return spec_from_json(j);
    }
    if (name.empty()) throw UsageError("a model name or --config is required");
    auto spec = parse_model_name(name);
    if (!spec) {
      throw UsageError("cannot parse model name '" + name +
                       "'; expected fmn{04|06|10|20|30}[+{TF|ATT|BIGRU|TCN|MAMBA|HYBRID}:{hidden}]");
    }
    return *spec;
  }
};

inline ClassMap resolve_classes(const std::string& path, std::size_t num_classes) {
  ClassMap map = path.empty() ? default_class_map(num_classes, std::min(num_classes, kEvalClasses))
                              : load_class_map(path);
  return map;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& f : detail::split(s, ',')) {
    try {
      out.push_back(detail::parse_double(f, "list"));
    } catch (const DataError&) {
      throw UsageError("bad number '" + f + "' in list '" + s + "'");
    }
  }
  return out;
}

inline void print_report(std::ostream& out, const ComplexityReport& r) {
  out << "model       " << r.config_name << '\n'
      << "params      " << r.params << '\n'
      << "macs        " << r.macs << '\n'
      << "params (M)  " << std::fixed << std::setprecision(3) << static_cast<double>(r.params) / 1e6 << '\n'
      << "macs (G)    " << static_cast<double>(r.macs) / 1e9 << '\n';
  out.unsetf(std::ios::fixed);
}

inline void append_csv(const std::string& path, const std::vector<ComplexityReport>& rows, bool truncate) {
  const bool fresh = truncate || !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream f(path, truncate ? std::ios::trunc : std::ios::app);
  if (!f) throw DataError("cannot write '" + path + "'");
  if (fresh) f << kComplexityCsvHeader << '\n';
  for (const auto& r : rows) f << csv_row(r) << '\n';
}

inline WeightStore load_checked_weights(const std::string& path, const ModelSpec& spec) {
  WeightStore w = load_fmnw(path);
  w.validate(model_inventory(spec));
  const auto inv = model_inventory(spec);
  if (w.size() != inv.size()) {
    std::set<std::string> expected;
    for (const auto& d : inv) expected.insert(d.name);
    for (const auto& [name, t] : w.entries()) {
      if (!expected.contains(name)) throw WeightError("unexpected parameter '" + name + "' for this model");
    }
  }
  return w;
}

inline std::vector<fs::path> list_files(const std::string& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no " + ext + " files in '" + dir + "'");
  return files;
}

inline Tensor mel_for_file(const fs::path& path, const MelConfig& cfg) {
  Audio a = load_wav(path.string());
  auto samples = resample_linear(a.samples, a.sample_rate, cfg.sample_rate);
  if (samples.empty()) throw DataError("'" + path.string() + "' holds no audio");
  return log_mel(samples, cfg);
}

// ---------------------------------------------------------------------------

struct Options {
  ModelArgs model;
  std::size_t threads = 0;  // 0: FMNSED_THREADS or all cores

  std::string csv;

  std::size_t batch = 64;
  std::size_t iters = 3;
  std::size_t warmup = 1;
  std::string weights;
  std::uint64_t seed = 0;

  std::string audio_dir;
  double threshold = 0.5;
  std::size_t median = 9;
  std::string out;
  std::string classes;
  std::string scores_out;

  std::string gt;
  std::string scores_dir;
  std::string det;
  std::size_t n_thresholds = 50;
  bool eval_subset = false;

  std::string alphas = "0.4,0.6,1.0,2.0,3.0";
  std::string kinds = "TF,BIGRU,HYBRID";
  std::string hidden;
  bool hidden_from_alpha = false;
  bool bench = false;

  std::size_t thread_count() const { return threads == 0 ? worker_threads() : threads; }
};

inline int cmd_profile(const Options& o, std::ostream& out) {
  const ModelSpec spec = o.model.resolve();
  ComplexityReport r = profile_model(spec);
  print_report(out, r);
  RunManifest m{"profile", r.config_name, {{"model", spec_to_json(spec)}}, {}, {}};
  if (!o.csv.empty()) {
    append_csv(o.csv, {r}, true);
    m.outputs.push_back(o.csv);
  }
  write_manifest(m);
  return ok;
}

inline int cmd_bench(const Options& o, std::ostream& out) {
  const ModelSpec spec = o.model.resolve();
  if (o.iters < 3) throw UsageError("--iters must be at least 3");
  if (o.batch == 0) throw UsageError("--batch must be positive");
  const WeightStore w = o.weights.empty() ? random_model_weights(spec, o.seed) : load_checked_weights(o.weights, spec);
  const BenchResult b = bench_throughput(spec, w, o.batch, o.warmup, o.iters, o.thread_count());
  ComplexityReport r = profile_model(spec);
  r.throughput = b.clips_per_second;
  r.batch_size = b.batch_size;
  r.threads = b.threads;
  r.hardware = b.hardware;
  out << kComplexityCsvHeader << '\n' << csv_row(r) << '\n';
  RunManifest m{"bench", r.config_name,
                {{"model", spec_to_json(spec)}, {"batch", o.batch}, {"iters", o.iters}, {"warmup", o.warmup},
                 {"threads", b.threads}, {"weights", o.weights}, {"seed", o.seed}},
                {},
                {}};
  if (!o.weights.empty()) m.inputs.push_back(o.weights);
  if (!o.csv.empty()) {
    append_csv(o.csv, {r}, false);
    m.outputs.push_back(o.csv);
  }
  write_manifest(m);
  return ok;
}

inline int cmd_infer(const Options& o, std::ostream& out) {
  const ModelSpec spec = o.model.resolve();
  if (o.median == 0 || o.median % 2 == 0) throw UsageError("--median must be an odd window >= 1");
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
  if (o.audio_dir.empty() || o.out.empty()) throw UsageError("infer needs --audio and --out");
  const ClassMap classes = resolve_classes(o.classes, spec.num_classes);
  if (classes.size() != spec.num_classes) {
    throw DataError("class map has " + std::to_string(classes.size()) + " classes, model predicts " +
                    std::to_string(spec.num_classes));
  }
  const WeightStore w =
      o.weights.empty() ? random_model_weights(spec, o.seed) : load_checked_weights(o.weights, spec);

  const auto files = list_files(o.audio_dir, ".wav");
  const MelConfig mel_cfg;
  std::vector<Tensor> mels(files.size());
  parallel_for(files.size(), o.thread_count(), [&](std::size_t i) { mels[i] = mel_for_file(files[i], mel_cfg); });
  const auto probs = predict_batch(spec, w, mels, o.thread_count());

  std::vector<EventList> lists;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Tensor smooth = median_filter(probs[i], o.median);
    lists.push_back(decode_events(smooth, static_cast<float>(o.threshold), kFrameSeconds, files[i].filename().string()));
  }
  {
    std::ofstream f(o.out);
    if (!f) throw DataError("cannot write '" + o.out + "'");
    write_event_tsv(f, lists, classes);
  }
  RunManifest m{"infer", model_name(spec),
                {{"model", spec_to_json(spec)}, {"weights", o.weights}, {"seed", o.seed}, {"audio", o.audio_dir},
                 {"threshold", o.threshold}, {"median", o.median}, {"classes", o.classes}},
                {},
                {o.out}};
  for (const auto& f : files) m.inputs.push_back(f.string());
  if (!o.weights.empty()) m.inputs.push_back(o.weights);
  if (!o.scores_out.empty()) {
    fs::create_directories(o.scores_out);
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < classes.size(); ++c) labels.push_back(classes.label(c));
    for (std::size_t i = 0; i < files.size(); ++i) {
      const fs::path p = fs::path(o.scores_out) / (files[i].filename().string() + ".tsv");
      std::ofstream f(p);
      if (!f) throw DataError("cannot write '" + p.string() + "'");
      write_scores_tsv(f, probs[i], labels);
      m.outputs.push_back(p.string());
    }
  }
  std::size_t n_events = 0;
  for (const auto& l : lists) n_events += l.events.size();
  out << "clips " << files.size() << ", events " << n_events << " -> " << o.out << '\n';
  write_manifest(m);
  return ok;
}

inline void drop_non_eval(std::vector<EventList>& lists, const ClassMap& classes) {
  for (auto& l : lists) {
    std::erase_if(l.events, [&](const Event& e) { return !classes[e.class_index].in_eval; });
  }
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  if (o.gt.empty()) throw UsageError("eval needs --gt");
  if (o.scores_dir.empty() == o.det.empty()) throw UsageError("eval needs exactly one of --scores or --det");
  if (o.median == 0 || o.median % 2 == 0) throw UsageError("--median must be an odd window >= 1");
  if (o.n_thresholds == 0) throw UsageError("--thresholds must be positive");
  const ClassMap classes = resolve_classes(o.classes, kTrainClasses);
  std::vector<EventList> gts = load_event_tsv(o.gt, classes);
  if (o.eval_subset) drop_non_eval(gts, classes);

  RunManifest m{"eval", "",
                {{"gt", o.gt}, {"scores", o.scores_dir}, {"det", o.det}, {"thresholds", o.n_thresholds},
                 {"median", o.median}, {"classes", o.classes}, {"eval_subset", o.eval_subset}},
                {o.gt},
                {}};
  PsdsResult r;
  if (!o.det.empty()) {
    OperatingPoint op;
    op.detections = load_event_tsv(o.det, classes);
    if (o.eval_subset) drop_non_eval(op.detections, classes);
    m.inputs.push_back(o.det);
    r = score_operating_points(std::span(&op, 1), gts, classes.size());
  } else {
    std::vector<ClipProbs> clips;
    for (const auto& path : list_files(o.scores_dir, ".tsv")) {
      std::ifstream f(path);
      auto [columns, probs] = parse_scores_tsv(f, classes, path.string());
      Tensor full({probs.dim(0), classes.size()}, 0.0f);
      for (std::size_t t = 0; t < probs.dim(0); ++t) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
          if (!o.eval_subset || classes[columns[j]].in_eval) full.at(t, columns[j]) = probs.at(t, j);
        }
      }
      clips.push_back({path.stem().string(), std::move(full)});
      m.inputs.push_back(path.string());
    }
    const auto grid = threshold_grid(o.n_thresholds);
    r = evaluate_psds1(clips, gts, grid, o.median);
  }
  json report{{"psds1", r.psds1}, {"per_class_auc", r.per_class_auc}};
  json labels = json::array();
  for (std::size_t c : r.classes) labels.push_back(classes.label(c));
  report["classes"] = labels;
  out << report.dump() << '\n';
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw DataError("cannot write '" + o.out + "'");
    f << report.dump(2) << '\n';
    m.outputs.push_back(o.out);
  }
  write_manifest(m);
  return ok;
}

inline std::vector<ComplexityReport> sweep_rows(const Options& o) {
  const auto alphas = parse_double_list(o.alphas);
  std::vector<SeqKind> kinds;
  for (const auto& k : detail::split(o.kinds, ',')) {
    const auto kind = parse_seq_kind(k);
    if (!kind) throw UsageError("unknown sequence kind '" + k + "'");
    kinds.push_back(*kind);
  }
  std::vector<std::size_t> hiddens;
  if (!o.hidden.empty()) {
    if (o.hidden_from_alpha) throw UsageError("--hidden and --hidden-from-alpha are exclusive");
    for (double h : parse_double_list(o.hidden)) {
      if (h < 1 || h != std::floor(h)) throw UsageError("hidden dims must be positive integers");
      hiddens.push_back(static_cast<std::size_t>(h));
    }
  }
  std::vector<ComplexityReport> rows;
  for (double a : alphas) {
    if (!(a > 0.0)) throw UsageError("alphas must be positive");
    for (SeqKind k : kinds) {
      std::vector<std::size_t> hs = hiddens;
      if (hs.empty()) hs.push_back(o.hidden_from_alpha ? hidden_from_alpha(a) : 256);
      if (k == SeqKind::none) hs.resize(1);
      for (std::size_t h : hs) {
        ModelSpec spec;
        try {
          spec = make_model_spec(a, k, h);
        } catch (const ShapeError& e) {
          throw UsageError(e.what());
        }
        ComplexityReport r = profile_model(spec);
        if (o.bench) {
          if (o.iters < 3) throw UsageError("--iters must be at least 3");
          const auto b = bench_throughput(spec, random_model_weights(spec, o.seed), o.batch, o.warmup, o.iters,
                                          o.thread_count());
          r.throughput = b.clips_per_second;
          r.batch_size = b.batch_size;
          r.threads = b.threads;
          r.hardware = b.hardware;
        }
        rows.push_back(r);
      }
    }
  }
  return rows;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
  const auto rows = sweep_rows(o);
  out << kComplexityCsvHeader << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
  RunManifest m{"sweep", "",
                {{"alphas", o.alphas}, {"kinds", o.kinds}, {"hidden", o.hidden},
                 {"hidden_from_alpha", o.hidden_from_alpha}, {"bench", o.bench}, {"batch", o.batch},
                 {"iters", o.iters}},
                {},
                {}};
  if (!o.csv.empty()) {
    append_csv(o.csv, rows, true);
    m.outputs.push_back(o.csv);
  }
  write_manifest(m);
  return ok;
}

// ---------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fmnsed: frame-wise sound event detection toolkit"};
  app.require_subcommand(1);
  Options o;
  std::string config;
  app.add_option("--config", config, "JSON architecture config instead of a model name");
  app.add_option("--threads", o.threads, "worker threads (default: FMNSED_THREADS or all cores)");

  auto* profile = app.add_subcommand("profile", "parameter and MAC counts");
  profile->add_option("model", o.model.name, "e.g. fmn10+TF:256");
  profile->add_option("--csv", o.csv, "write a CSV row");

  auto* bench = app.add_subcommand("bench", "measure throughput");
  bench->add_option("model", o.model.name);
  bench->add_option("--batch", o.batch)->capture_default_str();
  bench->add_option("--iters", o.iters, "timed iterations (>= 3)")->capture_default_str();
  bench->add_option("--warmup", o.warmup)->capture_default_str();
  bench->add_option("--weights", o.weights, "FMNW file (default: random weights)");
  bench->add_option("--seed", o.seed);
  bench->add_option("--csv", o.csv, "append the CSV row to this file");

  auto* infer = app.add_subcommand("infer", "detect events in a directory of WAV files");
  infer->add_option("model", o.model.name);
  infer->add_option("--weights", o.weights, "FMNW file (default: random weights from --seed)");
  infer->add_option("--seed", o.seed);
  infer->add_option("--audio", o.audio_dir, "directory of .wav clips")->required();
  infer->add_option("--threshold", o.threshold)->capture_default_str();
  infer->add_option("--median", o.median, "odd median window in frames")->capture_default_str();
  infer->add_option("--out", o.out, "event TSV")->required();
  infer->add_option("--classes", o.classes, "class-map CSV");
  infer->add_option("--scores-out", o.scores_out, "also write per-clip frame scores here");

  auto* eval = app.add_subcommand("eval", "PSDS1 of detections against ground truth");
  eval->add_option("--gt", o.gt, "ground-truth event TSV")->required();
  eval->add_option("--scores", o.scores_dir, "directory of per-clip score TSVs");
  eval->add_option("--det", o.det, "event TSV of detections at one operating point");
  eval->add_option("--thresholds", o.n_thresholds, "threshold grid size")->capture_default_str();
  eval->add_option("--median", o.median)->capture_default_str();
  eval->add_option("--classes", o.classes, "class-map CSV");
  eval->add_flag("--eval-subset", o.eval_subset, "score only classes flagged in_eval");
  eval->add_option("--out", o.out, "write the JSON report here too");

  auto* sweep = app.add_subcommand("sweep", "complexity over alpha and sequence kinds");
  sweep->add_option("--alphas", o.alphas)->capture_default_str();
  sweep->add_option("--kinds", o.kinds)->capture_default_str();
  sweep->add_option("--hidden", o.hidden, "comma-separated hidden dims");
  sweep->add_flag("--hidden-from-alpha", o.hidden_from_alpha, "hidden = 256 * alpha");
  sweep->add_flag("--bench", o.bench, "also measure throughput");
  sweep->add_option("--batch", o.batch)->capture_default_str();
  sweep->add_option("--iters", o.iters)->capture_default_str();
  sweep->add_option("--csv", o.csv);

  std::vector<std::string> argv_store{"fmnsed"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return usage;
  }
  o.model.config_path = config;

  try {
    if (*profile) return cmd_profile(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*infer) return cmd_infer(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*sweep) return cmd_sweep(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return usage;
  } catch (const WeightError& e) {
    err << "weight mismatch: " << e.what() << '\n';
    return weight_mismatch;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return internal;
  }
  return usage;
}

}  // namespace fmnsed::cli
