#include "privstream/detection.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json_io.hpp"

namespace privstream {

namespace detail {

BoundingBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("bbox must be an array [x, y, w, h]");
  BoundingBox b{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (b.w <= 0 || b.h <= 0) throw Error("bbox width and height must be positive");
  return b;
}

ordered_json bbox_to_json(const BoundingBox& b) { return ordered_json::array({b.x, b.y, b.w, b.h}); }

Detection detection_from_json(const json& j) {
  Detection d;
  d.label = j.at("label").get<std::string>();
  d.confidence = j.at("confidence").get<double>();
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
    throw Error("confidence for '" + d.label + "' outside [0, 1]");
  }
  if (const auto it = j.find("bbox"); it != j.end() && !it->is_null()) d.box = bbox_from_json(*it);
  return d;
}

ordered_json detection_to_json(const Detection& d) {
  ordered_json j;
  j["label"] = d.label;
  j["confidence"] = d.confidence;
  if (d.box) j["bbox"] = bbox_to_json(*d.box);
  return j;
}

std::vector<Detection> detections_from_json(const json& arr) {
  if (!arr.is_array()) throw Error("'detections' must be an array");
  std::vector<Detection> out;
  out.reserve(arr.size());
  for (const auto& d : arr) out.push_back(detection_from_json(d));
  return out;
}

ordered_json detections_to_json(const std::vector<Detection>& ds) {
  ordered_json arr = ordered_json::array();
  for (const auto& d : ds) arr.push_back(detection_to_json(d));
  return arr;
}

}  // namespace detail

std::optional<BoundingBox> BoundingBox::clipped(int frame_w, int frame_h) const {
  const int x0 = std::max(x, 0);
  const int y0 = std::max(y, 0);
  const int x1 = std::min(x + w, frame_w);
  const int y1 = std::min(y + h, frame_h);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

FrameDetections FrameDetections::reduce(std::int64_t frame_id, std::vector<Detection> detections,
                                        std::optional<std::span<const std::string>> props) {
  FrameDetections fd;
  fd.frame_id = frame_id;
  if (props) {
    for (const auto& p : *props) fd.per_prop.try_emplace(p);
  }
  for (const auto& d : detections) {
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw Error("confidence for '" + d.label + "' outside [0, 1]");
    }
    auto it = fd.per_prop.find(d.label);
    if (it == fd.per_prop.end()) {
      if (props) continue;
      it = fd.per_prop.try_emplace(d.label).first;
    }
    it->second.confidence = std::max(it->second.confidence, d.confidence);
    if (d.box) it->second.boxes.push_back(*d.box);
  }
  fd.detections = std::move(detections);
  return fd;
}

FrameDetections FrameDetections::restricted_to(std::span<const std::string> props) const {
  FrameDetections fd;
  fd.frame_id = frame_id;
  fd.detections = detections;
  for (const auto& p : props) {
    const auto it = per_prop.find(p);
    fd.per_prop[p] = it == per_prop.end() ? LabelSummary{} : it->second;
  }
  return fd;
}

double FrameDetections::confidence(std::string_view label) const {
  const auto it = per_prop.find(label);
  return it == per_prop.end() ? 0.0 : it->second.confidence;
}

FrameBuffer::FrameBuffer(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw Error("frame dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

FrameBuffer::FrameBuffer(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw Error("frame dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * height * kChannels) {
    throw Error("pixel buffer length does not match W*H*3");
  }
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  long next_int() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw CorruptHeader("PPM header value too large");
      ++pos_;
    }
    if (pos_ == start) throw CorruptHeader("PPM header: expected a number");
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw CorruptHeader("PPM header: missing whitespace before pixel data");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

FrameBuffer decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw UnsupportedFormat("not a PPM/PNM file");
  if (bytes[1] != '6') {
    throw UnsupportedFormat(std::string("unsupported PNM variant P") + static_cast<char>(bytes[1]) +
                            "; only binary P6 is supported");
  }
  HeaderReader header(bytes);
  const long w = header.next_int();
  const long h = header.next_int();
  const long maxval = header.next_int();
  if (w <= 0 || h <= 0) throw CorruptHeader("PPM dimensions must be positive");
  if (maxval != 255) throw UnsupportedFormat("only maxval 255 is supported");
  header.single_space();
  const std::size_t need = static_cast<std::size_t>(w) * h * FrameBuffer::kChannels;
  if (bytes.size() - header.pos() < need) throw CorruptHeader("PPM pixel data is truncated");
  std::vector<std::uint8_t> pixels(bytes.begin() + header.pos(), bytes.begin() + header.pos() + need);
  return FrameBuffer(static_cast<int>(w), static_cast<int>(h), std::move(pixels));
}

std::vector<std::uint8_t> encode_ppm(const FrameBuffer& frame) {
  const std::string header =
      "P6\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), frame.pixels().begin(), frame.pixels().end());
  return out;
}

FrameBuffer read_frame(const std::filesystem::path& path) {
  const std::string raw = slurp(path);
  return decode_ppm(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

void write_frame(const FrameBuffer& frame, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(frame);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DetectionLog parse_detection_log(std::string_view jsonl) {
  DetectionLog log;
  std::set<std::int64_t> seen;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = detail::json::parse(line);
      const auto id = j.at("frame_id").get<std::int64_t>();
      if (!seen.insert(id).second) throw Error("duplicate frame_id " + std::to_string(id));
      auto detections = detail::detections_from_json(j.at("detections"));
      log.frames.push_back(FrameDetections::reduce(id, std::move(detections)));
    } catch (const detail::json::exception& e) {
      throw ParseError("detection log line " + std::to_string(line_no) + ": " + e.what(), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError("detection log line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  std::stable_sort(log.frames.begin(), log.frames.end(),
                   [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
  for (std::size_t i = 1; i < log.frames.size(); ++i) {
    for (auto id = log.frames[i - 1].frame_id + 1; id < log.frames[i].frame_id; ++id) {
      log.gaps.push_back(id);
    }
  }
  return log;
}

DetectionLog load_detection_log(const std::filesystem::path& path) {
  return parse_detection_log(slurp(path));
}

std::string serialize_detection_line(const FrameDetections& frame) {
  detail::ordered_json j;
  j["frame_id"] = frame.frame_id;
  j["detections"] = detail::detections_to_json(frame.detections);
  return j.dump();
}

std::string serialize_detection_log(std::span<const FrameDetections> frames) {
  std::string out;
  for (const auto& f : frames) {
    out += serialize_detection_line(f);
    out += '\n';
  }
  return out;
}

}  // namespace privstream
