#pragma once

// Choosing, redacting and re-checking the objects to hide in a frame.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "privstream/abstraction.hpp"
#include "privstream/detection.hpp"
#include "privstream/detector.hpp"

namespace privstream {

struct ConcealmentPlan {
  std::vector<std::string> conceal;  // sorted
  Assignment resulting_assignment;
  double predicted_factor = 0.0;
};

struct PlanOptions {
  // Confidence a concealed label is assumed to drop to.
  double post_conceal_confidence = 0.05;
  // Skip the empty subset even when the decided assignment already satisfies
  // the body (used to look for a higher factor).
  bool require_nonempty = false;
};

// Enumerates subsets of the labels decided present, keeps those whose removal
// satisfies the body and picks by (1) highest predicted factor, (2) fewest
// labels, (3) lexicographic label order. Returns the empty plan straight away
// when the decided assignment already satisfies the body, unless
// require_nonempty. Throws Unsatisfiable when no subset works.
ConcealmentPlan plan(const AbstractionState& state, const FrameDetections& fd, const PlanOptions& options = {});

struct RedactionStyle {
  enum class Kind { Blackout, BoxBlur };
  Kind kind = Kind::BoxBlur;
  int blur_radius = 4;
  int passes = 3;  // iterated box blur approximates a Gaussian

  static RedactionStyle blackout() { return {Kind::Blackout, 1, 1}; }
  static RedactionStyle box_blur(int radius, int passes = 3) { return {Kind::BoxBlur, radius, passes}; }
};

RedactionStyle parse_redaction_style(std::string_view text);

// Pixels outside every box are left untouched. Boxes are clipped to the
// frame. Blur windows are clipped at the box edges.
FrameBuffer redact(const FrameBuffer& frame, std::span<const BoundingBox> boxes, const RedactionStyle& style);

enum class FramePolicy { Drop, BlackoutAll, PassWithFlag };
const char* to_string(FramePolicy policy);
FramePolicy parse_frame_policy(std::string_view text);

enum class FrameOutcome { Committed, Dropped, Blackout, Flagged };
const char* to_string(FrameOutcome outcome);
FrameOutcome parse_frame_outcome(std::string_view text);

struct ConcealmentConfig {
  double lambda = 0.0;
  int max_rounds = 3;
  FramePolicy policy = FramePolicy::BlackoutAll;
  RedactionStyle style;
  double post_conceal_confidence = 0.05;
};

struct ConcealmentLog {
  int rounds = 0;
  std::vector<std::string> concealed;          // sorted, cumulative
  std::vector<BoundingBox> redacted_boxes;
  std::vector<std::string> detected;           // decided present before concealment
  std::vector<std::string> remaining;          // decided present in the final detections
  FrameOutcome outcome = FrameOutcome::Committed;
  std::string note;                            // why a policy fired, if it did
  double detect_ms = 0.0;
  double calibrate_ms = 0.0;
  double abstraction_ms = 0.0;
  double conceal_ms = 0.0;
};

struct ConcealmentResult {
  std::optional<FrameBuffer> frame;  // nullopt when dropped or detection-only
  FrameDetections detections;        // final detections
  FrameFactor factor;                // factor to commit
  double candidate_pg = 0.0;         // pg_prev * factor.value
  ConcealmentLog log;
};

// Detect, then conceal and re-detect until the candidate guarantee reaches
// lambda with a decided assignment that satisfies the body, or max_rounds is
// spent; then the frame policy decides. Without pixels, concealment sets the
// label's confidence to post_conceal_confidence instead of re-detecting.
// Does not modify `state`; the caller commits result.factor.
ConcealmentResult conceal_until_safe(const AbstractionState& state, Detector& detector,
                                     const FrameRequest& request, const ConcealmentConfig& config);

// Same loop starting from detections already in hand (detection-only runs).
ConcealmentResult conceal_until_safe(const AbstractionState& state, Detector* detector,
                                     const FrameRequest& request, FrameDetections initial,
                                     const ConcealmentConfig& config);

}  // namespace privstream
