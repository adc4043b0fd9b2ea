#include "privstream/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace privstream {

namespace {

using json = nlohmann::json;

constexpr double kScoreGrid = 1e12;

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw Error(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json model_to_json(const CalibrationModel& m) {
  json j;
  j["m"] = m.size();
  j["scores"] = std::vector<double>(m.scores().begin(), m.scores().end());
  return j;
}

CalibrationModel model_from_json(const json& j) {
  auto scores = j.at("scores").get<std::vector<double>>();
  if (scores.empty()) throw EmptyCalibrationSet("calibration model has no scores");
  if (j.contains("m") && j.at("m").get<std::size_t>() != scores.size()) {
    throw Error("calibration model 'm' does not match the number of scores");
  }
  return CalibrationModel(std::move(scores));
}

}  // namespace

double quantize_score(double z) { return std::round(z * kScoreGrid) / kScoreGrid; }

CalibrationModel::CalibrationModel(std::vector<double> scores) : scores_(std::move(scores)) {
  if (scores_.empty()) throw EmptyCalibrationSet("calibration model needs at least one score");
  for (double& z : scores_) {
    if (std::isnan(z)) throw Error("nonconformity score is NaN");
    z = std::clamp(z, 0.0, 1.0);
  }
  std::sort(scores_.begin(), scores_.end());
}

double CalibrationModel::ecdf(double z) const {
  const auto count = std::upper_bound(scores_.begin(), scores_.end(), z) - scores_.begin();
  return static_cast<double>(count) / static_cast<double>(scores_.size() + 1);
}

double CalibrationModel::calibrate(double confidence) const {
  check_unit(confidence, "confidence");
  return confidence > 0.5 ? ecdf(confidence) : ecdf(quantize_score(1.0 - confidence));
}

double CalibrationModel::quantile_threshold(double epsilon) const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("epsilon must lie in (0, 1)");
  const auto m = static_cast<double>(scores_.size());
  // The tiny slack keeps e.g. 5 * 0.6 = 3.0000000000000004 at rank 3.
  const double rank = std::ceil((m + 1.0) * (1.0 - epsilon) - 1e-9);
  if (rank > m) return 1.0;
  const auto idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
  return scores_[idx];
}

CalibrationModel fit(std::span<const CalibrationRecord> records) {
  if (records.empty()) throw EmptyCalibrationSet("calibration set is empty");
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& r : records) {
    check_unit(r.confidence, "calibration confidence");
    scores.push_back(quantize_score(1.0 - r.truth_confidence()));
  }
  return CalibrationModel(std::move(scores));
}

std::map<std::string, CalibrationModel> fit_per_label(std::span<const CalibrationRecord> records) {
  std::map<std::string, std::vector<CalibrationRecord>> groups;
  for (const auto& r : records) groups[r.label].push_back(r);
  std::map<std::string, CalibrationModel> out;
  for (const auto& [label, group] : groups) out.emplace(label, fit(group));
  return out;
}

std::set<std::string> prediction_band(const CalibrationModel& model,
                                      const std::map<std::string, double>& frame_scores,
                                      double epsilon) {
  const double threshold = quantize_score(1.0 - model.quantile_threshold(epsilon));
  std::set<std::string> band;
  for (const auto& [label, score] : frame_scores) {
    check_unit(score, "detector score");
    if (score >= threshold) band.insert(label);
  }
  return band;
}

Calibrator Calibrator::raw() { return Calibrator(); }

Calibrator Calibrator::pooled(CalibrationModel model) {
  Calibrator c;
  c.kind_ = Kind::Pooled;
  c.pooled_ = std::move(model);
  return c;
}

Calibrator Calibrator::per_label(CalibrationModel pooled,
                                 std::map<std::string, CalibrationModel> models) {
  Calibrator c;
  c.kind_ = Kind::PerLabel;
  c.pooled_ = std::move(pooled);
  for (auto& [label, m] : models) c.per_label_.emplace(label, std::move(m));
  return c;
}

double Calibrator::calibrate(std::string_view label, double confidence) const {
  switch (kind_) {
    case Kind::Raw:
      check_unit(confidence, "confidence");
      return confidence > 0.5 ? confidence : 1.0 - confidence;
    case Kind::PerLabel:
      if (const auto it = per_label_.find(label); it != per_label_.end()) {
        return it->second.calibrate(confidence);
      }
      [[fallthrough]];
    case Kind::Pooled:
      return pooled_->calibrate(confidence);
  }
  return 0.0;
}

double Calibrator::quantile_threshold(double epsilon) const {
  return pooled_ ? pooled_->quantile_threshold(epsilon) : 1.0;
}

std::vector<CalibrationRecord> parse_calibration_records(std::string_view jsonl) {
  std::vector<CalibrationRecord> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      CalibrationRecord r;
      r.sample_id = j.value("sample_id", std::string{});
      r.label = j.at("label").get<std::string>();
      r.confidence = j.at("confidence").get<double>();
      r.present = j.value("present", true);
      check_unit(r.confidence, "confidence");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("calibration record line " + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    } catch (const Error& e) {
      throw ParseError("calibration record line " + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
  }
  return out;
}

std::vector<CalibrationRecord> load_calibration_records(const std::filesystem::path& path) {
  return parse_calibration_records(read_file(path));
}

std::string serialize_calibrator(const Calibrator& calibrator) {
  json j;
  if (calibrator.kind() == Calibrator::Kind::Raw) {
    j["kind"] = "raw";
    return j.dump();
  }
  j = model_to_json(*calibrator.pooled_model());
  j["kind"] = "conformal";
  if (calibrator.kind() == Calibrator::Kind::PerLabel) {
    json per = json::object();
    for (const auto& [label, m] : calibrator.label_models()) per[label] = model_to_json(m);
    j["per_label"] = std::move(per);
  }
  return j.dump();
}

Calibrator parse_calibrator(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("calibration model: ") + e.what(), 1);
  }
  const std::string kind = j.value("kind", std::string("conformal"));
  if (kind == "raw") return Calibrator::raw();
  if (kind != "conformal") throw Error("unknown calibration model kind '" + kind + "'");
  try {
    CalibrationModel pooled = model_from_json(j);
    if (!j.contains("per_label")) return Calibrator::pooled(std::move(pooled));
    std::map<std::string, CalibrationModel> per;
    for (const auto& [label, mj] : j.at("per_label").items()) per.emplace(label, model_from_json(mj));
    return Calibrator::per_label(std::move(pooled), std::move(per));
  } catch (const json::exception& e) {
    throw ParseError(std::string("calibration model: ") + e.what(), 1);
  }
}

void save_calibrator(const Calibrator& calibrator, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_calibrator(calibrator) << '\n';
}

Calibrator load_calibrator(const std::filesystem::path& path) {
  return parse_calibrator(read_file(path));
}

}  // namespace privstream
