#pragma once

// Detector backends. Every backend answers one request per frame with
// FrameDetections totalized over the requested labels.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "privstream/detection.hpp"

namespace privstream {

struct FrameRequest {
  std::int64_t frame_id = 0;
  // Pixels, when the stream carries them. Not owned.
  const FrameBuffer* frame = nullptr;
  // Where the pixels live on disk, for out-of-process detectors.
  std::optional<std::filesystem::path> frame_path;
  // Regions already redacted in `frame`. Real detectors see the redaction in
  // the pixels; scripted ones use this list instead.
  std::vector<BoundingBox> redacted;
};

class Detector {
 public:
  virtual ~Detector() = default;

  // Throws DetectorUnavailable, ProtocolError or MissingFrame.
  virtual FrameDetections detect(const FrameRequest& request,
                                 std::span<const std::string> props) = 0;
};

// Scripted detector: answers from a table of per-frame detections.
//
// Objects whose box is covered at least `occlusion_threshold` by redacted
// regions are reported with `redacted_confidence` and no box. With a non-zero
// miss or false-positive rate, outcomes are drawn from a hash of
// (seed, frame_id, label), so results do not depend on call order.
class MockDetector : public Detector {
 public:
  struct Options {
    double redacted_confidence = 0.02;
    double occlusion_threshold = 0.5;
    double miss_rate = 0.0;
    double false_positive_rate = 0.0;
    std::uint64_t seed = 0;
  };

  MockDetector(std::vector<FrameDetections> script, Options options);
  explicit MockDetector(std::vector<FrameDetections> script) : MockDetector(std::move(script), Options{}) {}

  FrameDetections detect(const FrameRequest& request, std::span<const std::string> props) override;

 private:
  std::map<std::int64_t, std::vector<Detection>> script_;
  Options options_;
};

// Fraction of `box` covered by the union of `regions` (pixel count).
double covered_fraction(const BoundingBox& box, std::span<const BoundingBox> regions);

// Replays a detection log verbatim. Requests for frames absent from the log
// throw MissingFrame.
class ReplayDetector : public Detector {
 public:
  explicit ReplayDetector(std::vector<FrameDetections> frames);

  FrameDetections detect(const FrameRequest& request, std::span<const std::string> props) override;

 private:
  std::map<std::int64_t, std::vector<Detection>> frames_;
};

// Client for an external detector process speaking newline-delimited JSON on
// its standard streams:
//   request  {"id":1,"frame_path":"frames/000007.ppm","labels":["person","face"]}
//   response {"id":1,"detections":[{"label":"person","confidence":0.91,"bbox":[...]}]}
// Replies may arrive out of order and are matched by id. An {"id":n,"error":..}
// reply, a timeout, or a dead child all surface as DetectorUnavailable.
class SidecarDetector : public Detector {
 public:
  struct Options {
    std::chrono::milliseconds timeout{2000};
    // Redacted frames are written here before being sent for re-detection.
    std::filesystem::path scratch_dir = std::filesystem::temp_directory_path();
  };

  // `command` runs under /bin/sh -c.
  SidecarDetector(const std::string& command, Options options);
  explicit SidecarDetector(const std::string& command) : SidecarDetector(command, Options{}) {}
  ~SidecarDetector() override;

  SidecarDetector(const SidecarDetector&) = delete;
  SidecarDetector& operator=(const SidecarDetector&) = delete;

  FrameDetections detect(const FrameRequest& request, std::span<const std::string> props) override;

  // Sends every request before reading any reply; results come back in
  // request order regardless of the order the sidecar answers in.
  std::vector<FrameDetections> detect_batch(std::span<const FrameRequest> requests,
                                            std::span<const std::string> props);

 private:
  struct Process;

  std::uint64_t send(const FrameRequest& request, std::span<const std::string> props);
  FrameDetections await(std::uint64_t id, std::int64_t frame_id, std::span<const std::string> props);

  std::unique_ptr<Process> proc_;
  Options options_;
  std::uint64_t next_id_ = 1;
};

}  // namespace privstream
