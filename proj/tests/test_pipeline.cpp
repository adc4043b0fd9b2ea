#include <atomic>
#include <random>
#include <thread>

#include "doctest.h"
#include "privstream/pipeline.hpp"

using namespace privstream;

namespace {

FrameDetections frame(std::int64_t id, std::map<std::string, double> conf) {
  std::vector<Detection> ds;
  for (const auto& [label, c] : conf) ds.push_back({label, c, std::nullopt});
  return FrameDetections::reduce(id, ds);
}

FrameInput detections_only(std::int64_t id, std::map<std::string, double> conf) {
  FrameInput in;
  in.frame_id = id;
  in.detections = frame(id, std::move(conf));
  return in;
}

FrameInput pixels_only(std::int64_t id, int w = 16, int h = 16) {
  FrameInput in;
  in.frame_id = id;
  in.pixels = FrameBuffer(w, h, 120);
  return in;
}

class FailingDetector : public Detector {
 public:
  FrameDetections detect(const FrameRequest&, std::span<const std::string>) override {
    throw DetectorUnavailable("sidecar timed out");
  }
};

}  // namespace

TEST_CASE("three-frame stream ends at 0.56") {
  const auto spec = parse_spec("G(!person)");
  const std::vector<FrameInput> inputs = {detections_only(0, {{"person", 0.0}}),
                                          detections_only(1, {{"person", 0.2}}),
                                          detections_only(2, {{"person", 0.3}})};
  const auto r = run_stream(spec, Calibrator::raw(), nullptr, StreamConfig{}, inputs);
  CHECK(std::abs(r.final_pg - 0.56) <= 1e-12);
  REQUIRE(r.trace.size() == 3);
  CHECK(r.trace[1].pg == doctest::Approx(0.8));
  CHECK(r.trace[2].factor == doctest::Approx(0.7));
  for (const auto& rec : r.trace) {
    CHECK(rec.outcome == FrameOutcome::Committed);
    CHECK(rec.rounds == 0);
  }
  CHECK(std::abs(product_of_factors(r.trace) - r.final_pg) <= 1e-12);
}

TEST_CASE("empty stream keeps pg at one") {
  const auto r = run_stream(parse_spec("G(!person)"), Calibrator::raw(), nullptr, StreamConfig{}, {});
  CHECK(r.final_pg == 1.0);
  CHECK(r.trace.empty());
}

TEST_CASE("stream pg is the product of the recorded factors") {
  const auto spec = parse_spec("G(person -> !face)");
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FrameInput> inputs;
  for (int i = 0; i < 200; ++i) inputs.push_back(detections_only(i, {{"person", u(rng)}, {"face", u(rng)}}));
  for (auto mode : {FactorMode::Distributional, FactorMode::Conservative}) {
    StreamConfig cfg;
    cfg.mode = mode;
    cfg.lambda = 0.0;
    const auto r = run_stream(spec, Calibrator::raw(), nullptr, cfg, inputs);
    CHECK(r.final_pg == doctest::Approx(product_of_factors(r.trace)).epsilon(1e-9));
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].pg <= r.trace[i - 1].pg);
    // Every emitted frame satisfies the body after concealment or was blacked out.
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      const auto& rec = r.trace[i];
      if (rec.outcome == FrameOutcome::Committed) {
        const bool person = std::count(rec.remaining.begin(), rec.remaining.end(), "person") > 0;
        const bool face = std::count(rec.remaining.begin(), rec.remaining.end(), "face") > 0;
        CHECK_FALSE((person && face));
      }
    }
  }
}

TEST_CASE("a stream with every frame blacked out") {
  const auto spec = parse_spec("G(!person)");
  MockDetector::Options o;
  o.occlusion_threshold = 2.0;  // never fooled
  std::vector<FrameDetections> script;
  for (int i = 0; i < 5; ++i) script.push_back(FrameDetections::reduce(i, {{"person", 0.95, BoundingBox{2, 2, 6, 6}}}));
  MockDetector det(script, o);
  std::vector<FrameInput> inputs;
  for (int i = 0; i < 5; ++i) inputs.push_back(pixels_only(i));
  StreamConfig cfg;
  cfg.lambda = 0.9;
  const auto r = run_stream(spec, Calibrator::raw(), &det, cfg, inputs);
  CHECK(r.final_pg == 1.0);
  for (const auto& out : r.outputs) {
    CHECK(out.record.outcome == FrameOutcome::Blackout);
    CHECK(out.record.rounds == 3);
    REQUIRE(out.frame);
    CHECK(*out.frame == FrameBuffer(16, 16, 0));
  }
}

TEST_CASE("detector failures follow the frame policy") {
  const auto spec = parse_spec("G(!person)");
  FailingDetector det;
  StreamConfig cfg;

  cfg.policy = FramePolicy::BlackoutAll;
  Stream blackout(spec, Calibrator::raw(), &det, cfg);
  auto out = blackout.process(pixels_only(0));
  CHECK(out.record.outcome == FrameOutcome::Blackout);
  CHECK(out.record.note.find("timed out") != std::string::npos);
  CHECK(*out.frame == FrameBuffer(16, 16, 0));
  CHECK(blackout.pg() == 1.0);
  CHECK(blackout.state().k() == 1);

  cfg.policy = FramePolicy::Drop;
  Stream drop(spec, Calibrator::raw(), &det, cfg);
  out = drop.process(pixels_only(0));
  CHECK(out.record.outcome == FrameOutcome::Dropped);
  CHECK_FALSE(out.frame.has_value());
  CHECK(drop.state().k() == 0);

  cfg.policy = FramePolicy::PassWithFlag;
  Stream flag(spec, Calibrator::raw(), &det, cfg);
  CHECK_THROWS_AS(flag.process(pixels_only(0)), DetectorUnavailable);
}

TEST_CASE("replay gaps become unverifiable frames") {
  const auto spec = parse_spec("G(!person)");
  ReplayDetector det({FrameDetections::reduce(0, {{"person", 0.1, {}}})});
  Stream s(spec, Calibrator::raw(), &det, StreamConfig{});
  CHECK(s.process(pixels_only(0)).record.outcome == FrameOutcome::Committed);
  const auto out = s.process(pixels_only(1));
  CHECK(out.record.outcome == FrameOutcome::Blackout);
  CHECK(out.detections.per_prop.size() == 1);
  CHECK(out.detections.confidence("person") == 0.0);
}

TEST_CASE("frame ids must increase") {
  Stream s(parse_spec("G(!person)"), Calibrator::raw(), nullptr, StreamConfig{});
  s.process(detections_only(3, {{"person", 0.1}}));
  CHECK_THROWS(s.process(detections_only(3, {{"person", 0.1}})));
  CHECK_THROWS(s.process(detections_only(2, {{"person", 0.1}})));
  CHECK_THROWS(s.process(FrameInput{4, std::nullopt, std::nullopt, std::nullopt}));
}

TEST_CASE("configuration checks") {
  StreamConfig cfg;
  cfg.lambda = 1.2;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.max_rounds = -1;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.epsilon = -0.1;
  CHECK_THROWS(Stream(parse_spec("G(!a)"), Calibrator::raw(), nullptr, cfg));
}

TEST_CASE("conformal threshold of the stream") {
  std::vector<CalibrationRecord> recs;
  for (double c : {0.9, 0.8, 0.7, 0.6}) recs.push_back({"", "person", c, true});
  StreamConfig cfg;
  cfg.epsilon = 0.4;
  Stream s(parse_spec("G(!person)"), Calibrator::pooled(fit(recs)), nullptr, cfg);
  CHECK(s.conformal_threshold() == doctest::Approx(0.3));
}

TEST_CASE("snapshots can be read while frames are processed") {
  Stream s(parse_spec("G(!person)"), Calibrator::raw(), nullptr, StreamConfig{});
  std::atomic<bool> done{false};
  std::atomic<bool> monotone{true};
  std::thread reader([&] {
    Snapshot last;
    while (!done) {
      const auto now = s.snapshot();
      if (now.k < last.k || now.pg > last.pg) monotone = false;
      last = now;
    }
  });
  for (int i = 0; i < 2000; ++i) s.process(detections_only(i, {{"person", 0.001}}));
  done = true;
  reader.join();
  CHECK(monotone);
  CHECK(s.snapshot().k == 2000);
  CHECK(s.snapshot().pg == doctest::Approx(s.pg()));
}

TEST_CASE("trace lines round-trip") {
  FrameRecord r;
  r.frame_id = 7;
  r.factor = 0.91;
  r.pg = 0.56;
  r.concealed = {"face"};
  r.rounds = 1;
  r.timings = {12.1, 0.02, 0.05, 3.4};
  r.detected = {"face", "person"};
  r.remaining = {"person"};
  r.redacted_boxes = {{120, 40, 64, 128}};
  const auto line = serialize_record(r);
  CHECK(line.rfind("{\"frame_id\":7,\"factor\":0.91,\"pg\":0.56,\"concealed\":[\"face\"],\"rounds\":1,"
                   "\"timings_ms\":{\"detect\":12.1,\"calibrate\":0.02,\"abstraction\":0.05,\"conceal\":3.4},"
                   "\"outcome\":\"committed\"",
                   0) == 0);
  const auto back = parse_record(line);
  CHECK(serialize_record(back) == line);
  CHECK(back.redacted_boxes == r.redacted_boxes);
  CHECK(back.remaining == r.remaining);

  r.outcome = FrameOutcome::Blackout;
  r.note = "threshold not reached";
  r.redacted_boxes.clear();
  const auto other = serialize_record(r);
  CHECK(other.find("\"redacted\"") == std::string::npos);
  const GuaranteeTrace t = {parse_record(line), parse_record(other)};
  CHECK(parse_trace(serialize_trace(t)).size() == 2);
  CHECK(serialize_trace(parse_trace(serialize_trace(t))) == serialize_trace(t));
  CHECK_THROWS_AS(parse_trace(serialize_trace(t) + "{\"frame_id\":}\n"), ParseError);
}
