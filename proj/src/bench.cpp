#include "privstream/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include "privstream/model_checker.hpp"

namespace privstream {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BenchRow run_row(const BenchConfig& config, std::size_t length) {
  const SpecFormula spec = bench_spec(config.props);
  const Calibrator calib = Calibrator::raw();
  const auto frames = bench_frames(config.props, length, config.seed + length);
  const auto probes = bench_frames(config.props, 256, config.seed ^ 0x9e3779b97f4a7c15ULL);

  BenchRow row;
  row.length = length;
  row.props = config.props;
  row.repetitions = config.repetitions;

  std::vector<double> updates;
  std::vector<double> totals;
  for (int rep = 0; rep < config.repetitions; ++rep) {
    AbstractionState state(spec, calib, config.mode);
    for (const auto& f : frames) state.update(f);
    updates.push_back(update_latency(state, probes, config.block, config.samples));
    if (length <= config.baseline_max_length && config.props <= UnrollLimits{}.max_props) {
      totals.push_back(baseline_total(spec, calib, config.mode, frames));
    }
  }
  row.update_us = median(updates) * 1e6;
  if (!totals.empty()) row.baseline_total_ms = median(totals) * 1e3;
  return row;
}

}  // namespace

SpecFormula bench_spec(std::size_t props) {
  if (props == 0) throw Error("benchmark needs at least one proposition");
  std::string body;
  for (std::size_t i = 1; i <= props; ++i) {
    if (i > 1) body += " & ";
    body += "!p" + std::to_string(i);
  }
  return parse_spec("G(" + body + ")");
}

std::vector<FrameDetections> bench_frames(std::size_t props, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<FrameDetections> out;
  out.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<Detection> dets;
    for (std::size_t i = 1; i <= props; ++i) {
      // Mostly confident absences, so pg does not collapse to zero at once.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      dets.push_back({"p" + std::to_string(i), 0.2 * u, std::nullopt});
    }
    out.push_back(FrameDetections::reduce(static_cast<std::int64_t>(t), std::move(dets)));
  }
  return out;
}

double update_latency(AbstractionState& state, const std::vector<FrameDetections>& frames, int block, int samples) {
  if (frames.empty() || block <= 0 || samples <= 0) throw Error("update_latency needs frames, block and samples");
  std::vector<double> per_update;
  per_update.reserve(static_cast<std::size_t>(samples));
  std::size_t next = 0;
  for (int s = 0; s < samples; ++s) {
    const auto t0 = Clock::now();
    for (int i = 0; i < block; ++i) {
      state.update(frames[next]);
      next = (next + 1) % frames.size();
    }
    per_update.push_back(seconds_since(t0) / block);
  }
  return median(per_update);
}

double baseline_total(const SpecFormula& spec, const Calibrator& calib, FactorMode mode,
                      const std::vector<FrameDetections>& frames) {
  const SatisfactionTable table(spec);
  const auto t0 = Clock::now();
  std::vector<FrameFactor> factors;
  double sink = 0.0;
  for (const auto& f : frames) {
    factors.push_back(frame_factor(table, calibrate_frame(spec, calib, f), mode));
    const auto chain = unroll(spec.props(), factors);
    sink += safety_probability_forward(chain, spec);
  }
  const double elapsed = seconds_since(t0);
  // Keeps the loop from being optimized away.
  if (sink < 0.0) std::fprintf(stderr, "%f\n", sink);
  return elapsed;
}

std::vector<BenchRow> bench_abstraction(const BenchConfig& config) {
  if (config.repetitions < 1) throw Error("repetitions must be at least 1");
  bench_spec(config.props);
  std::vector<BenchRow> rows(config.lengths.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, config.lengths.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) rows[i] = run_row(config, config.lengths[i]);
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "length,props,repetitions,update_us,baseline_total_ms\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%d,%.4f,", r.length, r.props, r.repetitions, r.update_us);
    out << buf;
    if (r.baseline_total_ms) {
      std::snprintf(buf, sizeof buf, "%.4f", *r.baseline_total_ms);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace privstream
