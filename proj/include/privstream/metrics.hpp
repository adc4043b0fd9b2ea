#pragma once

// Ground truth and the success ratios computed from a finished stream.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privstream/detection.hpp"
#include "privstream/detector.hpp"
#include "privstream/pipeline.hpp"
#include "privstream/spec.hpp"

namespace privstream {

struct GroundTruthObject {
  std::string label;
  bool present = true;
  std::optional<BoundingBox> box;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

// {"frame_id":7,"objects":[{"label":"person","present":true,"bbox":[120,40,64,128]}]}
struct GroundTruthFrame {
  std::int64_t frame_id = 0;
  std::vector<GroundTruthObject> objects;

  bool present(std::string_view label) const;
  std::vector<BoundingBox> boxes(std::string_view label) const;

  friend bool operator==(const GroundTruthFrame&, const GroundTruthFrame&) = default;
};

std::vector<GroundTruthFrame> parse_ground_truth(std::string_view jsonl);
std::vector<GroundTruthFrame> load_ground_truth(const std::filesystem::path& path);
std::string serialize_ground_truth(std::span<const GroundTruthFrame> frames);

// numerator / denominator, with 1.0 for an empty denominator.
struct Ratio {
  std::size_t numerator = 0;
  std::size_t denominator = 0;

  double value() const { return denominator == 0 ? 1.0 : static_cast<double>(numerator) / denominator; }
  bool vacuous() const { return denominator == 0; }
  Ratio& operator+=(const Ratio& o) {
    numerator += o.numerator;
    denominator += o.denominator;
    return *this;
  }
};

// Private occurrences are (frame, proposition) pairs present in the ground
// truth. An occurrence counts as detected when the detector decided the label
// present before concealment, and as concealed when the label was redacted or
// the whole frame was withheld (dropped or blacked out).
struct PrivacyCounts {
  std::size_t occurrences = 0;
  std::size_t detected = 0;
  std::size_t concealed = 0;
  std::size_t detected_or_concealed = 0;

  Ratio ratio() const { return {detected_or_concealed, occurrences}; }
  Ratio detected_ratio() const { return {detected, occurrences}; }
  Ratio concealed_ratio() const { return {concealed, occurrences}; }
  PrivacyCounts& operator+=(const PrivacyCounts& o);
};

// Throws MisalignedGroundTruth unless the trace and the ground truth cover
// the same frame ids.
PrivacyCounts privacy_counts(std::span<const std::string> props, std::span<const GroundTruthFrame> ground_truth,
                             const GuaranteeTrace& trace);
double privacy_preservation_ratio(std::span<const std::string> props,
                                  std::span<const GroundTruthFrame> ground_truth, const GuaranteeTrace& trace);

// Frames where `target` is present in the ground truth and still detected
// (confidence > 0.5) after redaction. `target` must not be a proposition.
Ratio non_private_counts(std::span<const std::string> props, std::span<const GroundTruthFrame> ground_truth,
                         std::span<const FrameDetections> post_redaction, const std::string& target);
double non_private_preservation_ratio(std::span<const std::string> props,
                                      std::span<const GroundTruthFrame> ground_truth,
                                      std::span<const FrameDetections> post_redaction, const std::string& target);

// Runs `detector` over the emitted version of every traced frame, asking for
// `labels`. Redacted regions come from the trace; dropped and blacked-out
// frames yield no detections.
std::vector<FrameDetections> redetect_after_redaction(Detector& detector, const GuaranteeTrace& trace,
                                                      std::span<const std::string> labels);

// Emitted frames whose true content, minus what was concealed, satisfies the
// body. Dropped frames emit nothing and count as satisfying.
Ratio spec_satisfaction(const SpecFormula& spec, std::span<const GroundTruthFrame> ground_truth,
                        const GuaranteeTrace& trace);

// Committed frames whose final decided assignment satisfies the body.
Ratio committed_satisfaction(const SpecFormula& spec, const GuaranteeTrace& trace);

struct StreamMetrics {
  std::size_t length = 0;
  std::size_t phi = 0;
  PrivacyCounts privacy;
  Ratio non_private;
  Ratio satisfaction;
  Ratio committed;
};

// `post_redaction` and `target` may be empty when there is no target object.
StreamMetrics evaluate_stream(const SpecFormula& spec, std::span<const GroundTruthFrame> ground_truth,
                              const GuaranteeTrace& trace, std::span<const FrameDetections> post_redaction = {},
                              const std::string& target = {});

struct MetricsRow {
  std::size_t length = 0;
  std::size_t phi = 0;
  std::size_t streams = 0;
  PrivacyCounts privacy;
  Ratio non_private;
  Ratio satisfaction;
  Ratio committed;
};

struct MetricsReport {
  MetricsRow overall;
  std::vector<MetricsRow> by_length;  // phi = 0
  std::vector<MetricsRow> by_phi;     // length = 0
  std::vector<MetricsRow> by_length_and_phi;

  double privacy_preservation_ratio() const { return overall.privacy.ratio().value(); }
  double non_private_preservation_ratio() const { return overall.non_private.value(); }
  double spec_satisfaction_rate() const { return overall.satisfaction.value(); }
  // Names of ratios whose denominator was empty.
  std::vector<std::string> warnings() const;
};

MetricsReport aggregate(std::span<const StreamMetrics> streams);
std::string to_json(const MetricsReport& report);
std::string to_csv(const MetricsReport& report);

}  // namespace privstream
