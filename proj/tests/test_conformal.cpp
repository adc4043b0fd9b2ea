#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "privstream/conformal.hpp"

using namespace privstream;

namespace {

std::vector<CalibrationRecord> records_with_truth(std::initializer_list<double> truth) {
  std::vector<CalibrationRecord> out;
  int i = 0;
  for (double c : truth) out.push_back({"s" + std::to_string(i++), "person", c, true});
  return out;
}

CalibrationModel four() { return fit(records_with_truth({0.9, 0.8, 0.7, 0.6})); }

}  // namespace

TEST_CASE("fit turns truth confidences into sorted scores") {
  const auto m = four();
  REQUIRE(m.size() == 4);
  const std::vector<double> expected{0.1, 0.2, 0.3, 0.4};
  for (std::size_t i = 0; i < 4; ++i) CHECK(m.scores()[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  const auto ones = fit(records_with_truth({1.0, 1.0, 1.0}));
  for (double z : ones.scores()) CHECK(z == 0.0);

  CHECK_THROWS_AS(fit(std::vector<CalibrationRecord>{}), EmptyCalibrationSet);
}

TEST_CASE("present flag decides which side of the confidence is the truth") {
  std::vector<CalibrationRecord> recs = {
      {"a", "person", 0.9, true},  {"b", "person", 0.9, false}, {"c", "face", 0.2, false},
      {"d", "face", 0.2, true},    {"e", "car", 0.5, true},     {"f", "car", 0.0, false},
      {"g", "car", 1.0, false},    {"h", "dog", 0.75, true},
  };
  // Hand enumeration of 1 - truth confidence.
  std::vector<double> expected = {0.1, 0.9, 0.2, 0.8, 0.5, 0.0, 1.0, 0.25};
  std::sort(expected.begin(), expected.end());
  const auto m = fit(recs);
  REQUIRE(m.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(m.scores()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("ecdf, calibrate and quantile threshold on four scores") {
  const auto m = four();
  CHECK(m.ecdf(0.25) == doctest::Approx(0.4));
  CHECK(m.ecdf(0.0) == 0.0);
  CHECK(m.ecdf(1.0) == doctest::Approx(0.8));
  CHECK(m.ecdf(0.3) == doctest::Approx(0.6));  // 1 - 0.7 lands on the score 0.3
  CHECK(m.calibrate(0.9) == doctest::Approx(0.8));
  CHECK(m.calibrate(0.3) == doctest::Approx(0.8));
  CHECK(m.calibrate(0.5) == doctest::Approx(m.ecdf(0.5)));
  CHECK(m.calibrate(0.7) == doctest::Approx(0.8));

  // Scores above one half make the calibration function discriminate.
  const auto wide = fit(records_with_truth({0.9, 0.3, 0.2}));
  CHECK(wide.calibrate(0.6) == doctest::Approx(0.25));
  CHECK(wide.calibrate(0.75) == doctest::Approx(0.5));
  CHECK(wide.calibrate(0.25) == doctest::Approx(0.5));
  CHECK(wide.calibrate(0.95) == doctest::Approx(0.75));

  CHECK(m.quantile_threshold(0.4) == doctest::Approx(0.3));
  CHECK(m.quantile_threshold(0.999) == doctest::Approx(0.1));
  CHECK(m.quantile_threshold(0.05) == 1.0);
  CHECK_THROWS(m.quantile_threshold(0.0));
}

TEST_CASE("prediction band") {
  const auto m = four();
  CHECK(prediction_band(m, {{"person", 0.75}, {"face", 0.6}}, 0.4) == std::set<std::string>{"person"});
  CHECK(prediction_band(m, {{"person", 0.0}, {"face", 0.6}}, 0.05) == std::set<std::string>{"face", "person"});
  CHECK(prediction_band(m, {}, 0.4).empty());
}

TEST_CASE("ecdf agrees with a linear count") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<CalibrationRecord> recs;
    const int m = 1 + static_cast<int>(rng() % 60);
    for (int i = 0; i < m; ++i) {
      // Coarse values so that ties and grid hits happen.
      const double c = std::round(u(rng) * 20.0) / 20.0;
      recs.push_back({std::to_string(i), "x", c, (rng() & 1) != 0});
    }
    const auto model = fit(recs);
    std::vector<double> scores;
    for (const auto& r : recs) scores.push_back(1.0 - (r.present ? r.confidence : 1.0 - r.confidence));
    for (int k = 0; k <= 100; ++k) {
      const double z = k / 100.0;
      CHECK(model.ecdf(z) == doctest::Approx(oracle::ecdf(scores, z)).epsilon(1e-15));
    }
  }
}

TEST_CASE("calibrate is symmetric and monotone on each side") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CalibrationRecord> recs;
  for (int i = 0; i < 200; ++i) recs.push_back({std::to_string(i), "x", u(rng), (rng() & 1) != 0});
  const auto model = fit(recs);
  double prev_hi = -1.0;
  double prev_lo = 2.0;
  for (int k = 0; k <= 1000; ++k) {
    const double c = k / 1000.0;
    CHECK(model.calibrate(c) == model.calibrate(1.0 - c));
    CHECK(model.calibrate(c) <= static_cast<double>(model.size()) / (model.size() + 1) + 1e-15);
    if (c > 0.5) {
      CHECK(model.calibrate(c) >= prev_hi);
      prev_hi = model.calibrate(c);
    } else {
      CHECK(model.calibrate(c) <= prev_lo);
      prev_lo = model.calibrate(c);
    }
  }
}

namespace {

CalibrationRecord noisy_record(std::mt19937_64& rng) {
  // Truth confidence skewed toward 1, label present half of the time.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double c = std::sqrt(u(rng));
  const bool present = (rng() & 1) != 0;
  return CalibrationRecord{"", "obj", present ? c : 1.0 - c, present};
}

double coverage(std::mt19937_64& rng, std::size_t m, std::size_t n, double eps) {
  std::vector<CalibrationRecord> cal;
  for (std::size_t i = 0; i < m; ++i) cal.push_back(noisy_record(rng));
  const auto model = fit(cal);
  std::map<std::string, double> scores;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = noisy_record(rng);
    scores["obj"] = r.truth_confidence();
    covered += prediction_band(model, scores, eps).count("obj");
  }
  return static_cast<double>(covered) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("coverage on synthetic detector noise") {
  std::mt19937_64 rng(7);
  const std::size_t m = 500, n = 2000;
  for (double eps : {0.05, 0.1, 0.2}) {
    const double rate = coverage(rng, m, n, eps);
    // Both the calibration set and the test set are random draws.
    const double sigma = std::sqrt(eps * (1 - eps) * (1.0 / n + 1.0 / (m + 2)));
    CAPTURE(eps);
    CHECK(rate >= 1 - eps - 3 * sigma);
  }
}

TEST_CASE("coverage averaged over calibration draws") {
  std::mt19937_64 rng(8);
  const std::size_t m = 200, n = 200, runs = 200;
  for (double eps : {0.05, 0.1, 0.2}) {
    double total = 0.0;
    for (std::size_t r = 0; r < runs; ++r) total += coverage(rng, m, n, eps);
    const double mean = total / runs;
    const double sigma = std::sqrt(eps * (1 - eps) * (1.0 / n + 1.0 / (m + 2)) / runs);
    CAPTURE(eps);
    CHECK(mean >= 1 - eps - 3 * sigma);
  }
}

TEST_CASE("calibrator kinds") {
  const auto raw = Calibrator::raw();
  CHECK(raw.calibrate("x", 0.9) == doctest::Approx(0.9));
  CHECK(raw.calibrate("x", 0.2) == doctest::Approx(0.8));
  CHECK(raw.quantile_threshold(0.1) == 1.0);

  std::vector<CalibrationRecord> recs = {{"1", "person", 0.9, true}, {"2", "person", 0.8, true},
                                         {"3", "face", 0.6, true},   {"4", "face", 0.7, true}};
  const auto pooled = fit(recs);
  const auto per = Calibrator::per_label(pooled, fit_per_label(recs));
  CHECK(per.calibrate("person", 0.95) == doctest::Approx(2.0 / 3.0));
  CHECK(per.calibrate("face", 0.95) == doctest::Approx(2.0 / 3.0));
  CHECK(per.calibrate("face", 0.65) == doctest::Approx(2.0 / 3.0));
  const std::vector<CalibrationRecord> spread = {{"1", "person", 0.9, true}, {"2", "person", 0.2, true},
                                                 {"3", "face", 0.1, true},   {"4", "face", 0.3, true}};
  const auto per2 = Calibrator::per_label(fit(spread), fit_per_label(spread));
  CHECK(per2.calibrate("person", 0.75) == doctest::Approx(1.0 / 3.0));
  CHECK(per2.calibrate("person", 0.85) == doctest::Approx(2.0 / 3.0));
  CHECK(per2.calibrate("face", 0.65) == doctest::Approx(0.0));
  CHECK(per2.calibrate("face", 0.85) == doctest::Approx(1.0 / 3.0));
  CHECK(per2.calibrate("face", 0.95) == doctest::Approx(2.0 / 3.0));
  // Unknown labels fall back to the pooled model.
  CHECK(per.calibrate("car", 0.65) == doctest::Approx(pooled.calibrate(0.65)));
}

TEST_CASE("record and model files") {
  const auto recs = parse_calibration_records(
      "{\"sample_id\":\"img_001\",\"label\":\"person\",\"confidence\":0.93,\"present\":true}\n\n"
      "{\"sample_id\":\"img_002\",\"label\":\"face\",\"confidence\":0.1,\"present\":false}\n");
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].truth_confidence() == doctest::Approx(0.9));
  try {
    parse_calibration_records("{\"label\":\"x\",\"confidence\":0.5,\"present\":true}\nnot json\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_calibration_records("{\"label\":\"x\",\"confidence\":1.5,\"present\":true}\n"), ParseError);

  const auto per = Calibrator::per_label(fit(recs), fit_per_label(recs));
  const auto text = serialize_calibrator(per);
  const auto back = parse_calibrator(text);
  CHECK(serialize_calibrator(back) == text);
  CHECK(back.kind() == Calibrator::Kind::PerLabel);
  CHECK(parse_calibrator(serialize_calibrator(Calibrator::raw())).kind() == Calibrator::Kind::Raw);
  CHECK_THROWS(parse_calibrator("{\"kind\":\"conformal\",\"m\":3,\"scores\":[0.1]}"));
  CHECK_THROWS_AS(parse_calibrator("{\"kind\":\"conformal\",\"m\":0,\"scores\":[]}"), EmptyCalibrationSet);
}
