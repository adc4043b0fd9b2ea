#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "privstream/bench.hpp"
#include "privstream/conformal.hpp"
#include "privstream/dataset.hpp"
#include "privstream/metrics.hpp"
#include "privstream/pipeline.hpp"

namespace privstream {

namespace {

namespace fs = std::filesystem;

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

SpecFormula load_spec(const std::string& path) { return parse_spec(read_text(path)); }

Calibrator load_calib_or_raw(const std::string& path) {
  return path.empty() ? Calibrator::raw() : load_calibrator(path);
}

// Turns the keys of a JSON config file into flags placed ahead of the ones on
// the command line, so that explicit flags win.
std::vector<std::string> config_args(const fs::path& path, const CLI::App& sub) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error("config " + path.string() + " must hold a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    const std::string flag = "--" + name;
    const CLI::Option* opt = sub.get_option_no_throw(flag);
    if (!opt || name == "config") throw Error("config key '" + key + "' is not an option of '" + sub.get_name() + "'");
    if (value.is_boolean()) {
      if (opt->get_expected_min() != 0) throw Error("config key '" + key + "' needs a value");
      out.push_back(flag + "=" + (value.get<bool>() ? "true" : "false"));
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      out.push_back(flag);
      out.push_back(value.dump());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      out.push_back(flag);
      out.push_back(joined);
    } else {
      throw Error("config key '" + key + "' has an unsupported value");
    }
  }
  return out;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions {
  std::string records;
  std::string out;
  bool per_label = false;
};

int cmd_calibrate(const CalibrateOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<CalibrationRecord> records;
  try {
    records = load_calibration_records(o.records);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    CalibrationModel pooled = fit(records);
    const auto scores = pooled.scores();
    const std::size_t m = scores.size();
    out << "m=" << m << "\n";
    auto quartile = [&](double q) {
      const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(m + 1) - 1e-9));
      return scores[std::clamp<std::size_t>(rank, 1, m) - 1];
    };
    out << format("ecdf quartiles: z25=%.6f z50=%.6f z75=%.6f\n", quartile(0.25), quartile(0.5), quartile(0.75));
    Calibrator calib = o.per_label ? Calibrator::per_label(pooled, fit_per_label(records))
                                   : Calibrator::pooled(pooled);
    save_calibrator(calib, o.out);
  } catch (const EmptyCalibrationSet& e) {
    err << "error: " << e.what() << "\n";
    return kExitEmptyCalibration;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- verify

struct VerifyOptions {
  std::string spec;
  std::string calib;
  std::string detections;
  std::string mode = "distributional";
  double lambda = 0.0;
  std::string dot;
  std::string chain_json;
};

int cmd_verify(const VerifyOptions& o, std::ostream& out, std::ostream& err) {
  try {
    AbstractionState state(load_spec(o.spec), load_calib_or_raw(o.calib), parse_factor_mode(o.mode));
    if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
    const DetectionLog log = load_detection_log(o.detections);
    for (const auto& fd : log.frames) {
      const FrameFactor f = state.update(fd);
      out << format("frame=%lld factor=%.6f pg=%.6f\n", static_cast<long long>(fd.frame_id), f.value, state.pg());
    }
    if (!o.dot.empty()) write_text(o.dot, to_dot(state.last_chain()));
    if (!o.chain_json.empty()) write_text(o.chain_json, to_json(state.last_chain()));
    out << format("pg=%.6f\n", state.pg());
    return state.pg() >= o.lambda ? kExitOk : kExitBelowThreshold;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

// ---------------------------------------------------------------- stream

struct StreamOptions {
  std::string spec;
  std::string calib;
  std::string frames;
  std::string detections;
  std::string detector = "auto";
  std::string sidecar_cmd;
  int sidecar_timeout_ms = 2000;
  double lambda = 0.0;
  double epsilon = 0.1;
  std::string mode = "distributional";
  std::string policy = "blackout-all";
  std::string style = "blur";
  int max_rounds = 3;
  double post_conceal_confidence = 0.05;
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct FrameFile {
  std::int64_t id;
  fs::path path;
};

std::vector<FrameFile> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("frames directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FrameFile> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    const bool numeric = !stem.empty() && std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; });
    out.push_back({numeric ? std::stoll(stem) : static_cast<std::int64_t>(i), files[i]});
  }
  std::sort(out.begin(), out.end(), [](const FrameFile& a, const FrameFile& b) { return a.id < b.id; });
  return out;
}

int cmd_stream(const StreamOptions& o, std::ostream& out, std::ostream& err) {
  StreamConfig config;
  std::optional<SpecFormula> spec;
  std::optional<Calibrator> calib;
  std::unique_ptr<Detector> detector;
  std::vector<FrameInput> inputs;
  std::string backend = o.detector;
  std::vector<FrameFile> frame_files;
  try {
    spec = load_spec(o.spec);
    calib = load_calib_or_raw(o.calib);
    config.lambda = o.lambda;
    config.epsilon = o.epsilon;
    config.mode = parse_factor_mode(o.mode);
    config.policy = parse_frame_policy(o.policy);
    config.style = parse_redaction_style(o.style);
    config.max_rounds = o.max_rounds;
    config.post_conceal_confidence = o.post_conceal_confidence;
    config.validate();

    if (o.frames.empty() && o.detections.empty()) throw Error("stream needs --frames, --detections or both");
    if (backend == "auto") {
      if (!o.sidecar_cmd.empty()) {
        backend = "sidecar";
      } else if (!o.frames.empty()) {
        backend = "mock";
      } else {
        backend = "none";
      }
    }
    if (!o.frames.empty()) frame_files = list_frames(o.frames);
    std::optional<DetectionLog> log;
    if (!o.detections.empty()) {
      log = load_detection_log(o.detections);
      if (!log->gaps.empty()) {
        err << "warning: detection log skips " << log->gaps.size() << " frame id(s)\n";
      }
    }

    if (backend == "none") {
      if (!log) throw Error("detection-only runs need --detections");
      std::map<std::int64_t, fs::path> paths;
      for (const auto& f : frame_files) paths[f.id] = f.path;
      for (const auto& fd : log->frames) {
        FrameInput in;
        in.frame_id = fd.frame_id;
        in.detections = fd;
        if (const auto it = paths.find(fd.frame_id); it != paths.end()) {
          in.path = it->second;
          in.pixels = read_frame(it->second);
        }
        inputs.push_back(std::move(in));
      }
    } else {
      if (backend == "mock") {
        if (!log) throw Error("the mock detector needs --detections");
        MockDetector::Options mo;
        mo.miss_rate = o.miss_rate;
        mo.false_positive_rate = o.false_positive_rate;
        mo.seed = o.seed;
        detector = std::make_unique<MockDetector>(log->frames, mo);
      } else if (backend == "replay") {
        if (!log) throw Error("the replay detector needs --detections");
        detector = std::make_unique<ReplayDetector>(log->frames);
      } else if (backend != "sidecar") {
        throw Error("unknown detector '" + backend + "' (expected auto, none, mock, replay or sidecar)");
      } else if (o.sidecar_cmd.empty() || o.frames.empty()) {
        throw Error("the sidecar detector needs --sidecar-cmd and --frames");
      }
      if (!frame_files.empty()) {
        for (const auto& f : frame_files) {
          FrameInput in;
          in.frame_id = f.id;
          in.path = f.path;
          in.pixels = read_frame(f.path);
          inputs.push_back(std::move(in));
        }
      } else {
        for (const auto& fd : log->frames) inputs.push_back(FrameInput{fd.frame_id, std::nullopt, std::nullopt, std::nullopt});
      }
    }
    if (o.out.empty()) throw Error("--out is required");
    fs::create_directories(fs::path(o.out) / "frames");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  const fs::path out_dir = o.out;
  std::ofstream trace_out(out_dir / "trace.jsonl", std::ios::binary);
  std::ofstream det_out(out_dir / "detections.jsonl", std::ios::binary);
  if (!trace_out || !det_out) {
    err << "error: cannot write to " << out_dir.string() << "\n";
    return kExitConfig;
  }

  std::size_t counts[4] = {0, 0, 0, 0};
  double pg = 1.0;
  int code = kExitOk;
  try {
    if (backend == "sidecar") {
      SidecarDetector::Options so;
      so.timeout = std::chrono::milliseconds(o.sidecar_timeout_ms);
      so.scratch_dir = out_dir / "scratch";
      fs::create_directories(so.scratch_dir);
      detector = std::make_unique<SidecarDetector>(o.sidecar_cmd, so);
    }
    Stream stream(*spec, *calib, detector.get(), config);
    for (const auto& in : inputs) {
      const FrameOutput fo = stream.process(in);
      trace_out << serialize_record(fo.record) << '\n';
      trace_out.flush();
      det_out << serialize_detection_line(fo.detections) << '\n';
      if (fo.frame) write_frame(*fo.frame, out_dir / "frames" / frame_file_name(fo.record.frame_id));
      ++counts[static_cast<int>(fo.record.outcome)];
      pg = stream.pg();
    }
    if (calib->kind() != Calibrator::Kind::Raw && config.epsilon > 0.0 && config.epsilon < 1.0) {
      out << format("c*=%.6f at epsilon=%.3f\n", stream.conformal_threshold(), config.epsilon);
    }
  } catch (const DetectorUnavailable& e) {
    err << "error: detector failure: " << e.what() << "\n";
    code = kExitDetector;
  } catch (const ProtocolError& e) {
    err << "error: detector failure: " << e.what() << "\n";
    code = kExitDetector;
  } catch (const MissingFrame& e) {
    err << "error: detector failure: " << e.what() << "\n";
    code = kExitDetector;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = kExitConfig;
  }
  out << format("frames=%zu committed=%zu dropped=%zu blackout=%zu flagged=%zu\n",
                counts[0] + counts[1] + counts[2] + counts[3], counts[0], counts[1], counts[2], counts[3]);
  out << format("pg=%.6f\n", pg);
  if (code != kExitOk) return code;
  return pg >= config.lambda ? kExitOk : kExitBelowThreshold;
}

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::string kind = "ed1";
  std::size_t length = 10;
  std::size_t phi = 3;
  long long insertions = -1;
  std::uint64_t seed = 0;
  bool frames = false;
  int width = 64;
  int height = 48;
  std::string out;
};

int cmd_gen(const GenOptions& o, std::ostream& out, std::ostream& err) {
  try {
    DatasetParams p;
    p.kind = parse_dataset_kind(o.kind);
    p.length = o.length;
    p.phi = o.phi;
    if (o.insertions >= 0) p.insertions = static_cast<std::size_t>(o.insertions);
    p.seed = o.seed;
    p.with_frames = o.frames;
    p.width = o.width;
    p.height = o.height;
    const Dataset ds = generate_dataset(p);
    write_dataset(ds, o.out);
    out << "spec=" << ds.spec_text << "\n";
    out << "private_frames=" << ds.private_frames.size() << "/" << ds.detections.size() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  std::vector<std::size_t> lengths{10, 100, 1000};
  std::size_t props = 1;
  int repetitions = 5;
  std::size_t jobs = 1;
  std::string mode = "distributional";
  std::string out;
};

int cmd_bench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  try {
    BenchConfig c;
    c.lengths = o.lengths;
    c.props = o.props;
    c.repetitions = o.repetitions;
    c.jobs = o.jobs;
    c.mode = parse_factor_mode(o.mode);
    const std::string csv = bench_csv(bench_abstraction(c));
    if (!o.out.empty()) write_text(o.out, csv);
    out << csv;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsOptions {
  std::string spec;
  std::string ground_truth;
  std::string trace;
  std::string detections;
  std::string target;
  std::string json;
  std::string csv;
};

int cmd_metrics(const MetricsOptions& o, std::ostream& out, std::ostream& err) {
  try {
    const SpecFormula spec = load_spec(o.spec);
    const auto gt = load_ground_truth(o.ground_truth);
    const GuaranteeTrace trace = parse_trace(read_text(o.trace));
    std::vector<FrameDetections> after;
    if (!o.target.empty()) {
      if (o.detections.empty()) throw Error("--target needs --detections to re-detect it");
      MockDetector detector(load_detection_log(o.detections).frames);
      const std::vector<std::string> labels{o.target};
      after = redetect_after_redaction(detector, trace, labels);
    }
    const StreamMetrics sm = evaluate_stream(spec, gt, trace, after, o.target);
    const MetricsReport report = aggregate(std::span<const StreamMetrics>(&sm, 1));
    if (!o.json.empty()) write_text(o.json, to_json(report));
    if (!o.csv.empty()) write_text(o.csv, to_csv(report));
    out << format("privacy_preservation_ratio=%.6f (%zu/%zu; detected %zu, concealed %zu)\n",
                  report.privacy_preservation_ratio(), sm.privacy.detected_or_concealed, sm.privacy.occurrences,
                  sm.privacy.detected, sm.privacy.concealed);
    if (!o.target.empty()) {
      out << format("non_private_preservation_ratio=%.6f (%zu/%zu)\n", report.non_private_preservation_ratio(),
                    sm.non_private.numerator, sm.non_private.denominator);
    }
    out << format("spec_satisfaction_rate=%.6f\n", report.spec_satisfaction_rate());
    for (const auto& w : report.warnings()) {
      if (o.target.empty() && w.rfind("non_private", 0) == 0) continue;
      err << "warning: " << w << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Privacy-constrained video streaming with verified guarantees", "privstream"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file of option values; command-line flags win");
  };

  CalibrateOptions cal;
  auto* c = app.add_subcommand("calibrate", "Fit a calibration model from labeled detections");
  c->add_option("--records", cal.records, "Calibration records (JSON lines)")->required();
  c->add_option("--out", cal.out, "Where to write the model")->required();
  c->add_flag("--per-label", cal.per_label, "Also fit one model per label");
  add_config(c);

  VerifyOptions ver;
  auto* v = app.add_subcommand("verify", "Monitor a detection log without concealment");
  v->add_option("--spec", ver.spec, "Specification file")->required();
  v->add_option("--calib", ver.calib, "Calibration model (default: raw confidences)");
  v->add_option("--detections", ver.detections, "Detection log (JSON lines)")->required();
  v->add_option("--mode", ver.mode, "distributional or conservative")->capture_default_str();
  v->add_option("--lambda", ver.lambda, "Privacy threshold")->capture_default_str();
  v->add_option("--dot", ver.dot, "Write the last frame's chain as DOT");
  v->add_option("--chain-json", ver.chain_json, "Write the last frame's chain as JSON");
  add_config(v);

  StreamOptions st;
  auto* s = app.add_subcommand("stream", "Run the concealment pipeline over a stream");
  s->add_option("--spec", st.spec, "Specification file")->required();
  s->add_option("--calib", st.calib, "Calibration model (default: raw confidences)");
  s->add_option("--frames", st.frames, "Directory of PPM frames");
  s->add_option("--detections", st.detections, "Detection log (JSON lines)");
  s->add_option("--detector", st.detector, "auto, none, mock, replay or sidecar")->capture_default_str();
  s->add_option("--sidecar-cmd", st.sidecar_cmd, "Command that starts the detector sidecar");
  s->add_option("--sidecar-timeout-ms", st.sidecar_timeout_ms, "Per-request sidecar timeout")->capture_default_str();
  s->add_option("--lambda", st.lambda, "Privacy threshold")->capture_default_str();
  s->add_option("--epsilon", st.epsilon, "Conformal error level")->capture_default_str();
  s->add_option("--mode", st.mode, "distributional or conservative")->capture_default_str();
  s->add_option("--policy", st.policy, "drop, blackout-all or pass-with-flag")->capture_default_str();
  s->add_option("--style", st.style, "blackout, blur or blur:RADIUS")->capture_default_str();
  s->add_option("--max-rounds", st.max_rounds, "Concealment rounds per frame")->capture_default_str();
  s->add_option("--post-conceal-confidence", st.post_conceal_confidence,
                "Confidence assumed for a concealed label")->capture_default_str();
  s->add_option("--miss-rate", st.miss_rate, "Mock detector miss rate")->capture_default_str();
  s->add_option("--false-positive-rate", st.false_positive_rate, "Mock detector false-positive rate")
      ->capture_default_str();
  s->add_option("--seed", st.seed, "Mock detector noise seed")->capture_default_str();
  s->add_option("--out", st.out, "Output directory")->required();
  add_config(s);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--kind", gen.kind, "ed1 or ed2")->capture_default_str();
  g->add_option("--length", gen.length, "Frames per stream")->capture_default_str();
  g->add_option("--phi", gen.phi, "Propositions (ed2)")->capture_default_str();
  g->add_option("--insertions", gen.insertions, "Private frames (default: a quarter of the length)");
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_flag("--frames", gen.frames, "Also write PPM frames");
  g->add_option("--width", gen.width, "Frame width")->capture_default_str();
  g->add_option("--height", gen.height, "Frame height")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();
  add_config(g);

  BenchOptions ben;
  auto* b = app.add_subcommand("bench", "Time the per-frame update against full re-verification");
  b->add_option("--lengths", ben.lengths, "Stream lengths")->delimiter(',')->capture_default_str();
  b->add_option("--props", ben.props, "Number of propositions")->capture_default_str();
  b->add_option("--repetitions", ben.repetitions, "Repetitions per length")->capture_default_str();
  b->add_option("--jobs", ben.jobs, "Lengths timed in parallel")->capture_default_str();
  b->add_option("--mode", ben.mode, "distributional or conservative")->capture_default_str();
  b->add_option("--out", ben.out, "CSV output path");
  add_config(b);

  MetricsOptions met;
  auto* m = app.add_subcommand("metrics", "Score a stream trace against ground truth");
  m->add_option("--spec", met.spec, "Specification file")->required();
  m->add_option("--ground-truth", met.ground_truth, "Ground truth (JSON lines)")->required();
  m->add_option("--trace", met.trace, "Trace written by stream")->required();
  m->add_option("--detections", met.detections, "Detection log used to re-detect the target");
  m->add_option("--target", met.target, "Non-private object to track");
  m->add_option("--json", met.json, "Write the report as JSON");
  m->add_option("--csv", met.csv, "Write the report as CSV");
  add_config(m);

  // A JSON config contributes flags ahead of the explicit ones.
  try {
    for (std::size_t i = 1; i < args.size(); ++i) {
      std::string path;
      std::size_t span = 0;
      if (args[i] == "--config" && i + 1 < args.size()) {
        path = args[i + 1];
        span = 2;
      } else if (args[i].rfind("--config=", 0) == 0) {
        path = args[i].substr(9);
        span = 1;
      } else {
        continue;
      }
      const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      if (!sub) break;
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + span));
      const auto extra = config_args(path, *sub);
      args.insert(args.begin() + 1, extra.begin(), extra.end());
      break;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (c->parsed()) return cmd_calibrate(cal, out, err);
  if (v->parsed()) return cmd_verify(ver, out, err);
  if (s->parsed()) return cmd_stream(st, out, err);
  if (g->parsed()) return cmd_gen(gen, out, err);
  if (b->parsed()) return cmd_bench(ben, out, err);
  if (m->parsed()) return cmd_metrics(met, out, err);
  return kExitConfig;
}

}  // namespace privstream
