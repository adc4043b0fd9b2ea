#include "privstream/concealment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace privstream {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr double kFactorTie = 1e-12;

// True when candidate (factor, labels) should replace the incumbent.
bool better(double f, const std::vector<std::string>& labels, double best_f,
            const std::vector<std::string>& best_labels) {
  if (f > best_f + kFactorTie) return true;
  if (f < best_f - kFactorTie) return false;
  if (labels.size() != best_labels.size()) return labels.size() < best_labels.size();
  return labels < best_labels;
}

std::vector<std::string> decided_labels(const SpecFormula& spec, const Assignment& a) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < spec.num_props(); ++i) {
    if (a[i]) out.push_back(spec.props()[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void blur_box(FrameBuffer& img, const BoundingBox& b, int radius) {
  const int x0 = b.x, x1 = b.x + b.w, y0 = b.y, y1 = b.y + b.h;
  std::vector<std::uint8_t> line(static_cast<std::size_t>(std::max(b.w, b.h)));
  for (int c = 0; c < FrameBuffer::kChannels; ++c) {
    // Horizontal.
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const int lo = std::max(x0, x - radius), hi = std::min(x1 - 1, x + radius);
        unsigned sum = 0;
        for (int i = lo; i <= hi; ++i) sum += img.at(i, y, c);
        const unsigned n = static_cast<unsigned>(hi - lo + 1);
        line[x - x0] = static_cast<std::uint8_t>((sum + n / 2) / n);
      }
      for (int x = x0; x < x1; ++x) img.at(x, y, c) = line[x - x0];
    }
    // Vertical.
    for (int x = x0; x < x1; ++x) {
      for (int y = y0; y < y1; ++y) {
        const int lo = std::max(y0, y - radius), hi = std::min(y1 - 1, y + radius);
        unsigned sum = 0;
        for (int i = lo; i <= hi; ++i) sum += img.at(x, i, c);
        const unsigned n = static_cast<unsigned>(hi - lo + 1);
        line[y - y0] = static_cast<std::uint8_t>((sum + n / 2) / n);
      }
      for (int y = y0; y < y1; ++y) img.at(x, y, c) = line[y - y0];
    }
  }
}

struct Evaluation {
  CalibratedFrame calibrated;
  FrameFactor factor;
  bool satisfied = false;
};

Evaluation evaluate_frame(const AbstractionState& state, const FrameDetections& fd, ConcealmentLog& log) {
  Evaluation e;
  auto t0 = Clock::now();
  e.calibrated = calibrate_frame(state.spec(), state.calibrator(), fd);
  log.calibrate_ms += ms_since(t0);
  t0 = Clock::now();
  e.factor = frame_factor(state.table(), e.calibrated, state.mode());
  e.satisfied = state.table()[e.calibrated.decided.bits()];
  log.abstraction_ms += ms_since(t0);
  return e;
}

ConcealmentResult run_loop(const AbstractionState& state, Detector* detector, const FrameRequest& request,
                           FrameDetections fd, const ConcealmentConfig& config, ConcealmentLog log) {
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  const SpecFormula& spec = state.spec();
  const double pg_prev = state.pg();
  fd = fd.restricted_to(spec.props());

  std::optional<FrameBuffer> pixels;
  if (request.frame) pixels = *request.frame;
  std::vector<BoundingBox> redacted = request.redacted;
  std::vector<std::string> concealed;

  Evaluation eval = evaluate_frame(state, fd, log);
  log.detected = decided_labels(spec, eval.calibrated.decided);

  auto finish = [&](FrameOutcome outcome, std::string note) {
    ConcealmentResult r;
    log.outcome = outcome;
    log.note = std::move(note);
    log.concealed = concealed;
    log.redacted_boxes = redacted;
    switch (outcome) {
      case FrameOutcome::Committed:
      case FrameOutcome::Flagged:
        r.frame = std::move(pixels);
        r.factor = std::move(eval.factor);
        log.remaining = decided_labels(spec, eval.calibrated.decided);
        break;
      case FrameOutcome::Dropped:
        r.factor.value = 1.0;
        r.factor.num_props = spec.num_props();
        break;
      case FrameOutcome::Blackout: {
        if (pixels) r.frame = FrameBuffer(pixels->width(), pixels->height(), 0);
        const Assignment nothing(spec.num_props(), 0);
        r.factor = FrameFactor::certain(spec, nothing);
        r.factor.mode = state.mode();
        for (auto& [label, summary] : fd.per_prop) summary = LabelSummary{};
        break;
      }
    }
    r.detections = std::move(fd);
    r.candidate_pg = pg_prev * r.factor.value;
    r.log = std::move(log);
    return r;
  };

  auto fire_policy = [&](std::string note) {
    switch (config.policy) {
      case FramePolicy::Drop: return finish(FrameOutcome::Dropped, std::move(note));
      case FramePolicy::BlackoutAll: return finish(FrameOutcome::Blackout, std::move(note));
      case FramePolicy::PassWithFlag: return finish(FrameOutcome::Flagged, std::move(note));
    }
    return finish(FrameOutcome::Blackout, std::move(note));
  };

  for (;;) {
    if (pg_prev * eval.factor.value >= config.lambda && eval.satisfied) {
      return finish(FrameOutcome::Committed, {});
    }
    if (log.rounds >= config.max_rounds) {
      return fire_policy("threshold not reached after " + std::to_string(log.rounds) + " rounds");
    }
    auto t0 = Clock::now();
    ConcealmentPlan p;
    try {
      p = plan(state, fd, {config.post_conceal_confidence, eval.satisfied});
    } catch (const Unsatisfiable& e) {
      log.conceal_ms += ms_since(t0);
      return fire_policy(e.what());
    }
    if (eval.satisfied && p.predicted_factor <= eval.factor.value + kFactorTie) {
      log.conceal_ms += ms_since(t0);
      return fire_policy("no concealment raises the guarantee");
    }

    std::vector<BoundingBox> new_boxes;
    bool unlocated = false;
    for (const auto& label : p.conceal) {
      if (std::find(concealed.begin(), concealed.end(), label) == concealed.end()) concealed.push_back(label);
      const auto& boxes = fd.per_prop.at(label).boxes;
      unlocated = unlocated || boxes.empty();
      new_boxes.insert(new_boxes.end(), boxes.begin(), boxes.end());
    }
    // A label without a location can only be hidden by covering the whole frame.
    if (pixels && unlocated) new_boxes = {BoundingBox{0, 0, pixels->width(), pixels->height()}};
    std::sort(concealed.begin(), concealed.end());
    ++log.rounds;

    if (pixels && detector) {
      pixels = redact(*pixels, new_boxes, config.style);
      redacted.insert(redacted.end(), new_boxes.begin(), new_boxes.end());
      log.conceal_ms += ms_since(t0);
      FrameRequest again = request;
      again.frame = &*pixels;
      again.redacted = redacted;
      t0 = Clock::now();
      fd = detector->detect(again, spec.props()).restricted_to(spec.props());
      log.detect_ms += ms_since(t0);
    } else {
      if (pixels) pixels = redact(*pixels, new_boxes, config.style);
      redacted.insert(redacted.end(), new_boxes.begin(), new_boxes.end());
      for (const auto& label : p.conceal) fd.per_prop[label] = LabelSummary{config.post_conceal_confidence, {}};
      log.conceal_ms += ms_since(t0);
    }
    eval = evaluate_frame(state, fd, log);
  }
}

}  // namespace

ConcealmentPlan plan(const AbstractionState& state, const FrameDetections& fd, const PlanOptions& options) {
  const SpecFormula& spec = state.spec();
  const SatisfactionTable& table = state.table();
  const CalibratedFrame base = calibrate_frame(spec, state.calibrator(), fd);
  const Assignment& dec = base.decided;

  if (!options.require_nonempty && table[dec.bits()]) {
    return {{}, dec, frame_factor(table, base, state.mode()).value};
  }

  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < spec.num_props(); ++i) {
    if (dec[i]) present.push_back(i);
  }
  const bool post_decided = options.post_conceal_confidence > 0.5;

  std::optional<ConcealmentPlan> best;
  const std::uint32_t subsets = 1u << present.size();
  for (std::uint32_t mask = options.require_nonempty ? 1 : 0; mask < subsets; ++mask) {
    CalibratedFrame trial = base;
    std::vector<std::string> labels;
    for (std::size_t j = 0; j < present.size(); ++j) {
      if (!((mask >> j) & 1u)) continue;
      const std::size_t i = present[j];
      const std::string& label = spec.props()[i];
      labels.push_back(label);
      trial.decided = trial.decided.with(i, post_decided);
      trial.quality[i] = state.calibrator().calibrate(label, options.post_conceal_confidence);
    }
    if (!table[trial.decided.bits()]) continue;
    std::sort(labels.begin(), labels.end());
    const double f = frame_factor(table, trial, state.mode()).value;
    if (!best || better(f, labels, best->predicted_factor, best->conceal)) {
      best = ConcealmentPlan{std::move(labels), trial.decided, f};
    }
  }
  if (!best) {
    throw Unsatisfiable("no subset of the detected labels can be concealed to satisfy " + spec.to_string());
  }
  return *best;
}

RedactionStyle parse_redaction_style(std::string_view text) {
  if (text == "blackout") return RedactionStyle::blackout();
  if (text == "blur" || text == "box_blur") return RedactionStyle{};
  constexpr std::string_view prefix = "blur:";
  if (text.substr(0, prefix.size()) == prefix) {
    const int r = std::stoi(std::string(text.substr(prefix.size())));
    if (r < 1) throw Error("blur radius must be at least 1");
    return RedactionStyle::box_blur(r);
  }
  throw Error("unknown redaction style '" + std::string(text) + "'");
}

FrameBuffer redact(const FrameBuffer& frame, std::span<const BoundingBox> boxes, const RedactionStyle& style) {
  if (style.kind == RedactionStyle::Kind::BoxBlur && style.blur_radius < 1) {
    throw Error("blur radius must be at least 1");
  }
  FrameBuffer out = frame;
  for (const auto& raw : boxes) {
    const auto b = raw.clipped(frame.width(), frame.height());
    if (!b) continue;
    if (style.kind == RedactionStyle::Kind::Blackout) {
      for (int y = b->y; y < b->y + b->h; ++y) {
        for (int x = b->x; x < b->x + b->w; ++x) {
          for (int c = 0; c < FrameBuffer::kChannels; ++c) out.at(x, y, c) = 0;
        }
      }
    } else {
      for (int pass = 0; pass < std::max(style.passes, 1); ++pass) blur_box(out, *b, style.blur_radius);
    }
  }
  return out;
}

const char* to_string(FramePolicy policy) {
  switch (policy) {
    case FramePolicy::Drop: return "drop";
    case FramePolicy::BlackoutAll: return "blackout-all";
    case FramePolicy::PassWithFlag: return "pass-with-flag";
  }
  return "?";
}

FramePolicy parse_frame_policy(std::string_view text) {
  if (text == "drop") return FramePolicy::Drop;
  if (text == "blackout-all") return FramePolicy::BlackoutAll;
  if (text == "pass-with-flag") return FramePolicy::PassWithFlag;
  throw Error("unknown frame policy '" + std::string(text) + "'");
}

const char* to_string(FrameOutcome outcome) {
  switch (outcome) {
    case FrameOutcome::Committed: return "committed";
    case FrameOutcome::Dropped: return "dropped";
    case FrameOutcome::Blackout: return "blackout";
    case FrameOutcome::Flagged: return "flagged";
  }
  return "?";
}

FrameOutcome parse_frame_outcome(std::string_view text) {
  if (text == "committed") return FrameOutcome::Committed;
  if (text == "dropped") return FrameOutcome::Dropped;
  if (text == "blackout") return FrameOutcome::Blackout;
  if (text == "flagged") return FrameOutcome::Flagged;
  throw Error("unknown frame outcome '" + std::string(text) + "'");
}

ConcealmentResult conceal_until_safe(const AbstractionState& state, Detector& detector,
                                     const FrameRequest& request, const ConcealmentConfig& config) {
  ConcealmentLog log;
  const auto t0 = Clock::now();
  FrameDetections fd = detector.detect(request, state.spec().props());
  log.detect_ms += ms_since(t0);
  return run_loop(state, &detector, request, std::move(fd), config, std::move(log));
}

ConcealmentResult conceal_until_safe(const AbstractionState& state, Detector* detector,
                                     const FrameRequest& request, FrameDetections initial,
                                     const ConcealmentConfig& config) {
  return run_loop(state, detector, request, std::move(initial), config, ConcealmentLog{});
}

}  // namespace privstream
