#pragma once

// Timing of the collapsed per-frame update against re-verifying the whole
// unrolled stream at every frame.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "privstream/abstraction.hpp"

namespace privstream {

struct BenchConfig {
  std::vector<std::size_t> lengths{10, 100, 1000};
  std::size_t props = 1;
  FactorMode mode = FactorMode::Distributional;
  int repetitions = 5;
  // Updates timed together in one sample.
  int block = 64;
  // Samples per repetition for the update median.
  int samples = 31;
  // The baseline runs only for lengths within the unroll guard.
  std::size_t baseline_max_length = 12;
  std::size_t jobs = 1;
  std::uint64_t seed = 1;
};

struct BenchRow {
  std::size_t length = 0;
  std::size_t props = 0;
  double update_us = 0.0;                  // median per-frame update at k = length
  std::optional<double> baseline_total_ms;  // median total re-verification time
  int repetitions = 0;
};

// Spec G(!p1 & ... & !pN) over random detection-only frames.
SpecFormula bench_spec(std::size_t props);
std::vector<FrameDetections> bench_frames(std::size_t props, std::size_t count, std::uint64_t seed);

// Median seconds per update + commit on a state that has already absorbed k
// frames. `state` advances by the timed updates.
double update_latency(AbstractionState& state, const std::vector<FrameDetections>& frames, int block, int samples);

// Seconds to re-verify every prefix of `frames` from scratch: for each k,
// unroll the first k frames and compute the safety probability.
double baseline_total(const SpecFormula& spec, const Calibrator& calib, FactorMode mode,
                      const std::vector<FrameDetections>& frames);

std::vector<BenchRow> bench_abstraction(const BenchConfig& config);
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace privstream
