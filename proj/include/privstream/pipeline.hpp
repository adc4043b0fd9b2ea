#pragma once

// One privacy-constrained stream: detect, calibrate, conceal until the
// guarantee holds, commit, emit.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "privstream/abstraction.hpp"
#include "privstream/concealment.hpp"
#include "privstream/detector.hpp"

namespace privstream {

struct StreamConfig {
  double lambda = 0.0;
  double epsilon = 0.1;
  FactorMode mode = FactorMode::Distributional;
  RedactionStyle style;
  FramePolicy policy = FramePolicy::BlackoutAll;
  int max_rounds = 3;
  double post_conceal_confidence = 0.05;

  void validate() const;
};

struct StageTimings {
  double detect_ms = 0.0;
  double calibrate_ms = 0.0;
  double abstraction_ms = 0.0;
  double conceal_ms = 0.0;
};

struct FrameRecord {
  std::int64_t frame_id = 0;
  double factor = 1.0;
  double pg = 1.0;
  std::vector<std::string> concealed;
  int rounds = 0;
  StageTimings timings;
  FrameOutcome outcome = FrameOutcome::Committed;
  std::vector<std::string> detected;   // decided present before concealment
  std::vector<std::string> remaining;  // decided present after concealment
  std::string note;
  std::vector<BoundingBox> redacted_boxes;
};

using GuaranteeTrace = std::vector<FrameRecord>;

// {"frame_id":7,"factor":0.91,"pg":0.56,"concealed":["face"],"rounds":1,
//  "timings_ms":{"detect":12.1,"calibrate":0.02,"abstraction":0.05,"conceal":3.4},
//  "outcome":"committed","detected":[..],"remaining":[..],"redacted":[[x,y,w,h],..]}
// "redacted" and "note" are omitted when empty.
std::string serialize_record(const FrameRecord& record);
FrameRecord parse_record(std::string_view line);
std::string serialize_trace(const GuaranteeTrace& trace);
GuaranteeTrace parse_trace(std::string_view jsonl);

struct FrameInput {
  std::int64_t frame_id = 0;
  std::optional<FrameBuffer> pixels;
  std::optional<std::filesystem::path> path;
  // Detection-only runs supply detections directly instead of a detector call.
  std::optional<FrameDetections> detections;
};

struct FrameOutput {
  FrameRecord record;
  std::optional<FrameBuffer> frame;  // nullopt when dropped or detection-only
  FrameDetections detections;        // final detections over AP
};

struct Snapshot {
  double pg = 1.0;
  std::uint64_t k = 0;
};

class Stream {
 public:
  // `detector` may be null when every FrameInput carries detections.
  Stream(SpecFormula spec, Calibrator calib, Detector* detector, StreamConfig config);

  // Frames must arrive in strictly increasing frame_id order.
  FrameOutput process(const FrameInput& input);

  double pg() const { return state_.pg(); }
  const AbstractionState& state() const { return state_; }
  const GuaranteeTrace& trace() const { return trace_; }
  const StreamConfig& config() const { return config_; }
  // Threshold c* of the pooled calibration model at the configured epsilon.
  double conformal_threshold() const;

  // Safe to call from other threads while process() runs.
  Snapshot snapshot() const;

 private:
  AbstractionState state_;
  Detector* detector_;
  StreamConfig config_;
  GuaranteeTrace trace_;
  std::optional<std::int64_t> last_frame_id_;
  mutable std::mutex snapshot_mutex_;
  Snapshot published_;
};

struct StreamResult {
  GuaranteeTrace trace;
  double final_pg = 1.0;
  std::vector<FrameOutput> outputs;
};

// Runs every input through a fresh Stream. `sink`, when set, receives each
// output as soon as it is committed and outputs are not retained.
StreamResult run_stream(const SpecFormula& spec, const Calibrator& calib, Detector* detector,
                        const StreamConfig& config, const std::vector<FrameInput>& inputs,
                        const std::function<void(const FrameOutput&)>& sink = {});

// Product of the per-frame factors in a trace (the final pg, computed
// without log-space accumulation).
double product_of_factors(const GuaranteeTrace& trace);

}  // namespace privstream
