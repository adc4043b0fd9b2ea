#include "privstream/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "json_io.hpp"

namespace privstream {

namespace {

using ordered_json = nlohmann::ordered_json;

double round_ms(double ms) { return std::round(ms * 1e6) / 1e6; }

StageTimings timings_of(const ConcealmentLog& log) {
  return {log.detect_ms, log.calibrate_ms, log.abstraction_ms, log.conceal_ms};
}

}  // namespace

void StreamConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("epsilon must lie in [0, 1]");
  if (max_rounds < 0) throw Error("max_rounds must be non-negative");
  if (!(post_conceal_confidence >= 0.0 && post_conceal_confidence <= 1.0)) {
    throw Error("post-concealment confidence must lie in [0, 1]");
  }
  if (style.kind == RedactionStyle::Kind::BoxBlur && style.blur_radius < 1) {
    throw Error("blur radius must be at least 1");
  }
}

std::string serialize_record(const FrameRecord& r) {
  ordered_json j;
  j["frame_id"] = r.frame_id;
  j["factor"] = r.factor;
  j["pg"] = r.pg;
  j["concealed"] = r.concealed;
  j["rounds"] = r.rounds;
  j["timings_ms"] = ordered_json{{"detect", round_ms(r.timings.detect_ms)},
                                 {"calibrate", round_ms(r.timings.calibrate_ms)},
                                 {"abstraction", round_ms(r.timings.abstraction_ms)},
                                 {"conceal", round_ms(r.timings.conceal_ms)}};
  j["outcome"] = to_string(r.outcome);
  j["detected"] = r.detected;
  j["remaining"] = r.remaining;
  if (!r.redacted_boxes.empty()) {
    ordered_json boxes = ordered_json::array();
    for (const auto& b : r.redacted_boxes) boxes.push_back(detail::bbox_to_json(b));
    j["redacted"] = std::move(boxes);
  }
  if (!r.note.empty()) j["note"] = r.note;
  return j.dump();
}

FrameRecord parse_record(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  FrameRecord r;
  r.frame_id = j.at("frame_id").get<std::int64_t>();
  r.factor = j.at("factor").get<double>();
  r.pg = j.at("pg").get<double>();
  r.concealed = j.value("concealed", std::vector<std::string>{});
  r.rounds = j.value("rounds", 0);
  if (j.contains("timings_ms")) {
    const auto& t = j["timings_ms"];
    r.timings = {t.value("detect", 0.0), t.value("calibrate", 0.0), t.value("abstraction", 0.0),
                 t.value("conceal", 0.0)};
  }
  r.outcome = parse_frame_outcome(j.value("outcome", std::string("committed")));
  r.detected = j.value("detected", std::vector<std::string>{});
  r.remaining = j.value("remaining", std::vector<std::string>{});
  if (const auto it = j.find("redacted"); it != j.end()) {
    for (const auto& b : *it) r.redacted_boxes.push_back(detail::bbox_from_json(b));
  }
  r.note = j.value("note", std::string{});
  return r;
}

std::string serialize_trace(const GuaranteeTrace& trace) {
  std::string out;
  for (const auto& r : trace) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

GuaranteeTrace parse_trace(std::string_view jsonl) {
  GuaranteeTrace out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const std::exception& e) {
      throw ParseError("trace line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

Stream::Stream(SpecFormula spec, Calibrator calib, Detector* detector, StreamConfig config)
    : state_(std::move(spec), std::move(calib), config.mode), detector_(detector), config_(config) {
  config_.validate();
}

Snapshot Stream::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return published_;
}

double Stream::conformal_threshold() const {
  if (!(config_.epsilon > 0.0 && config_.epsilon < 1.0)) return 1.0;
  return state_.calibrator().quantile_threshold(config_.epsilon);
}

FrameOutput Stream::process(const FrameInput& input) {
  if (last_frame_id_ && input.frame_id <= *last_frame_id_) {
    throw Error("frame " + std::to_string(input.frame_id) + " arrived after frame " +
                std::to_string(*last_frame_id_));
  }
  last_frame_id_ = input.frame_id;

  FrameRequest request;
  request.frame_id = input.frame_id;
  request.frame = input.pixels ? &*input.pixels : nullptr;
  request.frame_path = input.path;

  const ConcealmentConfig cc{config_.lambda, config_.max_rounds, config_.policy, config_.style,
                             config_.post_conceal_confidence};
  ConcealmentResult result;
  std::optional<std::string> failure;
  try {
    if (input.detections) {
      result = conceal_until_safe(state_, detector_, request, *input.detections, cc);
    } else {
      if (!detector_) throw Error("frame " + std::to_string(input.frame_id) + " has no detections and no detector");
      result = conceal_until_safe(state_, *detector_, request, cc);
    }
  } catch (const DetectorUnavailable& e) {
    failure = e.what();
  } catch (const ProtocolError& e) {
    failure = e.what();
  } catch (const MissingFrame& e) {
    failure = e.what();
  }

  if (failure) {
    // An unverifiable frame cannot be passed through.
    if (config_.policy == FramePolicy::PassWithFlag) {
      throw DetectorUnavailable("frame " + std::to_string(input.frame_id) + ": " + *failure);
    }
    const auto& spec = state_.spec();
    result = {};
    result.log.note = *failure;
    if (config_.policy == FramePolicy::Drop) {
      result.log.outcome = FrameOutcome::Dropped;
      result.factor.value = 1.0;
    } else {
      result.log.outcome = FrameOutcome::Blackout;
      result.factor = FrameFactor::certain(spec, Assignment(spec.num_props(), 0));
      if (input.pixels) result.frame = FrameBuffer(input.pixels->width(), input.pixels->height(), 0);
    }
    result.detections = FrameDetections::reduce(input.frame_id, {}, spec.props());
  }

  if (result.log.outcome != FrameOutcome::Dropped) state_.apply(result.factor);

  FrameOutput out;
  FrameRecord& r = out.record;
  r.frame_id = input.frame_id;
  r.factor = result.log.outcome == FrameOutcome::Dropped ? 1.0 : result.factor.value;
  r.pg = state_.pg();
  r.concealed = result.log.concealed;
  r.rounds = result.log.rounds;
  r.timings = timings_of(result.log);
  r.outcome = result.log.outcome;
  r.detected = result.log.detected;
  r.remaining = result.log.remaining;
  r.note = result.log.note;
  r.redacted_boxes = result.log.redacted_boxes;
  out.frame = std::move(result.frame);
  out.detections = std::move(result.detections);
  trace_.push_back(r);
  {
    std::lock_guard lock(snapshot_mutex_);
    published_ = Snapshot{state_.pg(), state_.k()};
  }
  return out;
}

StreamResult run_stream(const SpecFormula& spec, const Calibrator& calib, Detector* detector,
                        const StreamConfig& config, const std::vector<FrameInput>& inputs,
                        const std::function<void(const FrameOutput&)>& sink) {
  Stream stream(spec, calib, detector, config);
  StreamResult result;
  for (const auto& input : inputs) {
    FrameOutput out = stream.process(input);
    if (sink) {
      sink(out);
    } else {
      result.outputs.push_back(std::move(out));
    }
  }
  result.trace = stream.trace();
  result.final_pg = stream.pg();
  return result;
}

double product_of_factors(const GuaranteeTrace& trace) {
  double p = 1.0;
  for (const auto& r : trace) p *= r.factor;
  return p;
}

}  // namespace privstream
