#pragma once

// Seeded synthetic streams in the style of the evaluation datasets: private
// frames inserted at random positions, remaining slots filled with
// non-private content.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "privstream/detection.hpp"
#include "privstream/metrics.hpp"

namespace privstream {

enum class DatasetKind {
  // One proposition, "person".
  PersonInsertion,
  // Propositions p1..pK, all present together in every inserted frame.
  MultiLabel,
};

const char* to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view text);  // "ed1" | "ed2"

struct DatasetParams {
  DatasetKind kind = DatasetKind::PersonInsertion;
  std::size_t length = 10;
  // Frames carrying private content; defaults to a quarter of the length
  // (at least one).
  std::optional<std::size_t> insertions;
  std::size_t phi = 3;  // MultiLabel only
  std::uint64_t seed = 0;
  int width = 64;
  int height = 48;
  bool with_frames = false;
  // Non-private object tracked by the feature-preservation metric.
  std::string target = "target";
  double target_rate = 0.5;

  void validate() const;  // throws Error
};

struct Dataset {
  DatasetParams params;
  std::string spec_text;  // e.g. G(!p1 & !p2 & !p3)
  std::vector<std::string> props;
  std::vector<std::int64_t> private_frames;  // ascending
  std::vector<FrameDetections> detections;   // oracle detector output
  std::vector<GroundTruthFrame> ground_truth;
  std::vector<FrameBuffer> frames;           // empty unless with_frames
};

// Same params, same bytes.
Dataset generate_dataset(const DatasetParams& params);

// Writes spec.txt, detections.jsonl, ground_truth.jsonl, meta.json and, when
// present, frames/NNNNNN.ppm.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

std::string frame_file_name(std::int64_t frame_id);

}  // namespace privstream
