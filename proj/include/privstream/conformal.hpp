#pragma once

// Split-conformal calibration of detector confidences.
//
// A calibration model stores the sorted nonconformity scores z_i = 1 - c_i,
// where c_i is the confidence the detector assigned to the ground truth of
// calibration sample i. The empirical CDF uses the (m + 1) denominator, which
// gives the usual finite-sample conformal validity.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privstream/error.hpp"

namespace privstream {

struct CalibrationRecord {
  std::string sample_id;
  std::string label;
  double confidence = 0.0;
  bool present = true;

  // Confidence assigned to the ground truth: c when present, 1 - c otherwise.
  double truth_confidence() const { return present ? confidence : 1.0 - confidence; }
};

class CalibrationModel {
 public:
  // Scores need not be sorted; they are clamped to [0, 1] and sorted.
  explicit CalibrationModel(std::vector<double> scores);

  std::span<const double> scores() const { return scores_; }
  std::size_t size() const { return scores_.size(); }

  // |{z_i <= z}| / (m + 1).
  double ecdf(double z) const;

  // f_C(c): ecdf(c) when c > 0.5, ecdf(1 - c) otherwise.
  double calibrate(double confidence) const;

  // Smallest c* with ecdf(c*) >= 1 - epsilon: the ceil((m+1)(1-epsilon))-th
  // smallest score, or 1 when that rank exceeds m.
  double quantile_threshold(double epsilon) const;

  friend bool operator==(const CalibrationModel&, const CalibrationModel&) = default;

 private:
  std::vector<double> scores_;
};

// Nonconformity scores are snapped to a 1e-12 grid so that, e.g., 1 - 0.7
// compares equal to the literal 0.3.
double quantize_score(double z);

CalibrationModel fit(std::span<const CalibrationRecord> records);

// One model per label, for detectors whose error rates differ by class.
std::map<std::string, CalibrationModel> fit_per_label(std::span<const CalibrationRecord> records);

// Labels whose score clears the conformal threshold 1 - c*.
std::set<std::string> prediction_band(const CalibrationModel& model,
                                      const std::map<std::string, double>& frame_scores,
                                      double epsilon);

// The calibration function applied to a detection, in one of three forms:
// raw (f_C(c) = max(c, 1 - c), useful for scripted runs), pooled conformal,
// or per-label conformal with a pooled fallback.
class Calibrator {
 public:
  enum class Kind { Raw, Pooled, PerLabel };

  static Calibrator raw();
  static Calibrator pooled(CalibrationModel model);
  static Calibrator per_label(CalibrationModel pooled, std::map<std::string, CalibrationModel> models);

  Kind kind() const { return kind_; }
  double calibrate(std::string_view label, double confidence) const;
  // Threshold for the pooled model; 1 for the raw calibrator.
  double quantile_threshold(double epsilon) const;

  const std::optional<CalibrationModel>& pooled_model() const { return pooled_; }
  const std::map<std::string, CalibrationModel, std::less<>>& label_models() const { return per_label_; }

 private:
  Calibrator() = default;

  Kind kind_ = Kind::Raw;
  std::optional<CalibrationModel> pooled_;
  std::map<std::string, CalibrationModel, std::less<>> per_label_;
};

// JSON-lines records: {"sample_id":..,"label":..,"confidence":..,"present":..}
std::vector<CalibrationRecord> load_calibration_records(const std::filesystem::path& path);
std::vector<CalibrationRecord> parse_calibration_records(std::string_view jsonl);

// Model files: {"kind":"conformal","m":4,"scores":[...]} with an optional
// "per_label" object of {"m","scores"}; or {"kind":"raw"}.
std::string serialize_calibrator(const Calibrator& calibrator);
Calibrator parse_calibrator(std::string_view json_text);
void save_calibrator(const Calibrator& calibrator, const std::filesystem::path& path);
Calibrator load_calibrator(const std::filesystem::path& path);

}  // namespace privstream
