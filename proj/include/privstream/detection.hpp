#pragma once

// Detector output, frame buffers and the on-disk formats for both.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privstream/error.hpp"

namespace privstream {

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const { return static_cast<long long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  // Intersection with the frame rectangle; nullopt when empty.
  std::optional<BoundingBox> clipped(int frame_w, int frame_h) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
  std::string label;
  double confidence = 0.0;
  std::optional<BoundingBox> box;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Max-reduced view of one label in one frame.
struct LabelSummary {
  double confidence = 0.0;
  std::vector<BoundingBox> boxes;

  friend bool operator==(const LabelSummary&, const LabelSummary&) = default;
};

struct FrameDetections {
  std::int64_t frame_id = 0;
  // Raw detections as the backend reported them.
  std::vector<Detection> detections;
  // One entry per label: confidence is the max over that label's detections.
  std::map<std::string, LabelSummary, std::less<>> per_prop;

  // Builds per_prop from `detections`. When `props` is given, per_prop is
  // exactly those labels (missing ones get confidence 0 and no boxes) and
  // other labels are dropped.
  static FrameDetections reduce(std::int64_t frame_id, std::vector<Detection> detections,
                                std::optional<std::span<const std::string>> props = std::nullopt);

  // Same frame restricted to and totalized over `props`.
  FrameDetections restricted_to(std::span<const std::string> props) const;

  double confidence(std::string_view label) const;

  friend bool operator==(const FrameDetections&, const FrameDetections&) = default;
};

// Packed 8-bit RGB, row-major.
class FrameBuffer {
 public:
  static constexpr int kChannels = 3;

  FrameBuffer() = default;
  FrameBuffer(int width, int height, std::uint8_t fill = 0);
  FrameBuffer(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  std::uint8_t at(int x, int y, int c) const { return pixels_[offset(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c) { return pixels_[offset(x, y, c)]; }

  friend bool operator==(const FrameBuffer&, const FrameBuffer&) = default;

 private:
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Binary PPM (P6, maxval 255).
FrameBuffer decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const FrameBuffer& frame);
FrameBuffer read_frame(const std::filesystem::path& path);
void write_frame(const FrameBuffer& frame, const std::filesystem::path& path);

// Detection log, one JSON object per line:
// {"frame_id":7,"detections":[{"label":"person","confidence":0.91,"bbox":[120,40,64,128]}]}
struct DetectionLog {
  std::vector<FrameDetections> frames;   // ascending frame_id
  std::vector<std::int64_t> gaps;        // ids missing between first and last frame
};

DetectionLog parse_detection_log(std::string_view jsonl);
DetectionLog load_detection_log(const std::filesystem::path& path);
std::string serialize_detection_line(const FrameDetections& frame);
std::string serialize_detection_log(std::span<const FrameDetections> frames);

}  // namespace privstream
