#include "privstream/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "json_io.hpp"

namespace privstream {

namespace {

using detail::json;
using detail::ordered_json;

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::map<std::int64_t, const GroundTruthFrame*> index_ground_truth(std::span<const GroundTruthFrame> gt) {
  std::map<std::int64_t, const GroundTruthFrame*> out;
  for (const auto& f : gt) {
    if (!out.emplace(f.frame_id, &f).second) {
      throw MisalignedGroundTruth("ground truth lists frame " + std::to_string(f.frame_id) + " twice");
    }
  }
  return out;
}

std::map<std::int64_t, const GroundTruthFrame*> aligned(std::span<const GroundTruthFrame> gt,
                                                        const GuaranteeTrace& trace) {
  auto index = index_ground_truth(gt);
  if (index.size() != trace.size()) {
    throw MisalignedGroundTruth("trace has " + std::to_string(trace.size()) + " frames, ground truth has " +
                                std::to_string(index.size()));
  }
  std::set<std::int64_t> seen;
  for (const auto& r : trace) {
    if (!seen.insert(r.frame_id).second) {
      throw MisalignedGroundTruth("trace lists frame " + std::to_string(r.frame_id) + " twice");
    }
    if (!index.count(r.frame_id)) {
      throw MisalignedGroundTruth("frame " + std::to_string(r.frame_id) + " has no ground truth");
    }
  }
  return index;
}

bool withheld(FrameOutcome outcome) { return outcome == FrameOutcome::Dropped || outcome == FrameOutcome::Blackout; }

ordered_json ratio_json(const Ratio& r) {
  return ordered_json{{"value", r.value()}, {"numerator", r.numerator}, {"denominator", r.denominator}};
}

ordered_json row_json(const MetricsRow& row) {
  ordered_json j;
  j["length"] = row.length;
  j["phi"] = row.phi;
  j["streams"] = row.streams;
  j["privacy_preservation_ratio"] = ratio_json(row.privacy.ratio());
  j["private_occurrences"] = row.privacy.occurrences;
  j["detected"] = row.privacy.detected;
  j["concealed"] = row.privacy.concealed;
  j["non_private_preservation_ratio"] = ratio_json(row.non_private);
  j["spec_satisfaction_rate"] = ratio_json(row.satisfaction);
  j["committed_satisfaction_rate"] = ratio_json(row.committed);
  return j;
}

void add(MetricsRow& row, const StreamMetrics& s) {
  ++row.streams;
  row.privacy += s.privacy;
  row.non_private += s.non_private;
  row.satisfaction += s.satisfaction;
  row.committed += s.committed;
}

}  // namespace

bool GroundTruthFrame::present(std::string_view label) const {
  return std::any_of(objects.begin(), objects.end(),
                     [&](const GroundTruthObject& o) { return o.present && o.label == label; });
}

std::vector<BoundingBox> GroundTruthFrame::boxes(std::string_view label) const {
  std::vector<BoundingBox> out;
  for (const auto& o : objects) {
    if (o.present && o.label == label && o.box) out.push_back(*o.box);
  }
  return out;
}

std::vector<GroundTruthFrame> parse_ground_truth(std::string_view jsonl) {
  std::vector<GroundTruthFrame> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      GroundTruthFrame f;
      f.frame_id = j.at("frame_id").get<std::int64_t>();
      for (const auto& o : j.at("objects")) {
        GroundTruthObject obj;
        obj.label = o.at("label").get<std::string>();
        obj.present = o.value("present", true);
        if (const auto it = o.find("bbox"); it != o.end() && !it->is_null()) obj.box = detail::bbox_from_json(*it);
        f.objects.push_back(std::move(obj));
      }
      out.push_back(std::move(f));
    } catch (const std::exception& e) {
      throw ParseError("ground truth line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const GroundTruthFrame& a, const GroundTruthFrame& b) { return a.frame_id < b.frame_id; });
  return out;
}

std::vector<GroundTruthFrame> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open ground truth " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ground_truth(ss.str());
}

std::string serialize_ground_truth(std::span<const GroundTruthFrame> frames) {
  std::string out;
  for (const auto& f : frames) {
    ordered_json j;
    j["frame_id"] = f.frame_id;
    ordered_json objs = ordered_json::array();
    for (const auto& o : f.objects) {
      ordered_json oj;
      oj["label"] = o.label;
      oj["present"] = o.present;
      if (o.box) oj["bbox"] = detail::bbox_to_json(*o.box);
      objs.push_back(std::move(oj));
    }
    j["objects"] = std::move(objs);
    out += j.dump();
    out += '\n';
  }
  return out;
}

PrivacyCounts& PrivacyCounts::operator+=(const PrivacyCounts& o) {
  occurrences += o.occurrences;
  detected += o.detected;
  concealed += o.concealed;
  detected_or_concealed += o.detected_or_concealed;
  return *this;
}

PrivacyCounts privacy_counts(std::span<const std::string> props, std::span<const GroundTruthFrame> ground_truth,
                             const GuaranteeTrace& trace) {
  const auto index = aligned(ground_truth, trace);
  PrivacyCounts c;
  for (const auto& r : trace) {
    const GroundTruthFrame& gt = *index.at(r.frame_id);
    for (const auto& p : props) {
      if (!gt.present(p)) continue;
      ++c.occurrences;
      const bool det = contains(r.detected, p);
      const bool con = withheld(r.outcome) || contains(r.concealed, p);
      if (det) ++c.detected;
      if (con) ++c.concealed;
      if (det || con) ++c.detected_or_concealed;
    }
  }
  return c;
}

double privacy_preservation_ratio(std::span<const std::string> props,
                                  std::span<const GroundTruthFrame> ground_truth, const GuaranteeTrace& trace) {
  return privacy_counts(props, ground_truth, trace).ratio().value();
}

Ratio non_private_counts(std::span<const std::string> props, std::span<const GroundTruthFrame> ground_truth,
                         std::span<const FrameDetections> post_redaction, const std::string& target) {
  if (std::find(props.begin(), props.end(), target) != props.end()) {
    throw Error("non-private target '" + target + "' is one of the specification's propositions");
  }
  std::map<std::int64_t, const FrameDetections*> after;
  for (const auto& fd : post_redaction) after.emplace(fd.frame_id, &fd);
  Ratio r;
  for (const auto& gt : ground_truth) {
    if (!gt.present(target)) continue;
    const auto it = after.find(gt.frame_id);
    if (it == after.end()) {
      throw MisalignedGroundTruth("no post-redaction detections for frame " + std::to_string(gt.frame_id));
    }
    ++r.denominator;
    if (it->second->confidence(target) > 0.5) ++r.numerator;
  }
  return r;
}

double non_private_preservation_ratio(std::span<const std::string> props,
                                      std::span<const GroundTruthFrame> ground_truth,
                                      std::span<const FrameDetections> post_redaction, const std::string& target) {
  return non_private_counts(props, ground_truth, post_redaction, target).value();
}

std::vector<FrameDetections> redetect_after_redaction(Detector& detector, const GuaranteeTrace& trace,
                                                      std::span<const std::string> labels) {
  std::vector<FrameDetections> out;
  out.reserve(trace.size());
  for (const auto& r : trace) {
    if (withheld(r.outcome)) {
      out.push_back(FrameDetections::reduce(r.frame_id, {}, labels));
      continue;
    }
    FrameRequest req;
    req.frame_id = r.frame_id;
    req.redacted = r.redacted_boxes;
    out.push_back(detector.detect(req, labels));
  }
  return out;
}

Ratio spec_satisfaction(const SpecFormula& spec, std::span<const GroundTruthFrame> ground_truth,
                        const GuaranteeTrace& trace) {
  const auto index = aligned(ground_truth, trace);
  Ratio r;
  for (const auto& rec : trace) {
    ++r.denominator;
    if (withheld(rec.outcome)) {
      // A blacked-out frame shows nothing; a dropped one is never emitted.
      if (rec.outcome == FrameOutcome::Dropped || satisfies(spec, Assignment(spec.num_props(), 0))) ++r.numerator;
      continue;
    }
    const GroundTruthFrame& gt = *index.at(rec.frame_id);
    std::vector<bool> values;
    for (const auto& p : spec.props()) values.push_back(gt.present(p) && !contains(rec.concealed, p));
    if (satisfies(spec, Assignment::from_values(values))) ++r.numerator;
  }
  return r;
}

Ratio committed_satisfaction(const SpecFormula& spec, const GuaranteeTrace& trace) {
  Ratio r;
  for (const auto& rec : trace) {
    if (rec.outcome != FrameOutcome::Committed) continue;
    ++r.denominator;
    std::vector<bool> values;
    for (const auto& p : spec.props()) values.push_back(contains(rec.remaining, p));
    if (satisfies(spec, Assignment::from_values(values))) ++r.numerator;
  }
  return r;
}

StreamMetrics evaluate_stream(const SpecFormula& spec, std::span<const GroundTruthFrame> ground_truth,
                              const GuaranteeTrace& trace, std::span<const FrameDetections> post_redaction,
                              const std::string& target) {
  StreamMetrics m;
  m.length = trace.size();
  m.phi = specification_complexity(spec);
  m.privacy = privacy_counts(spec.props(), ground_truth, trace);
  if (!target.empty()) m.non_private = non_private_counts(spec.props(), ground_truth, post_redaction, target);
  m.satisfaction = spec_satisfaction(spec, ground_truth, trace);
  m.committed = committed_satisfaction(spec, trace);
  return m;
}

std::vector<std::string> MetricsReport::warnings() const {
  std::vector<std::string> out;
  if (overall.privacy.ratio().vacuous()) out.push_back("privacy_preservation_ratio: no private occurrences");
  if (overall.non_private.vacuous()) out.push_back("non_private_preservation_ratio: no target occurrences");
  if (overall.satisfaction.vacuous()) out.push_back("spec_satisfaction_rate: no frames");
  if (overall.committed.vacuous()) out.push_back("committed_satisfaction_rate: no committed frames");
  return out;
}

MetricsReport aggregate(std::span<const StreamMetrics> streams) {
  std::map<std::size_t, MetricsRow> by_len;
  std::map<std::size_t, MetricsRow> by_phi;
  std::map<std::pair<std::size_t, std::size_t>, MetricsRow> by_both;
  MetricsReport report;
  for (const auto& s : streams) {
    add(report.overall, s);
    auto& a = by_len[s.length];
    a.length = s.length;
    add(a, s);
    auto& b = by_phi[s.phi];
    b.phi = s.phi;
    add(b, s);
    auto& c = by_both[{s.length, s.phi}];
    c.length = s.length;
    c.phi = s.phi;
    add(c, s);
  }
  for (auto& [k, row] : by_len) report.by_length.push_back(row);
  for (auto& [k, row] : by_phi) report.by_phi.push_back(row);
  for (auto& [k, row] : by_both) report.by_length_and_phi.push_back(row);
  return report;
}

std::string to_json(const MetricsReport& report) {
  ordered_json j;
  j["overall"] = row_json(report.overall);
  auto rows = [](const std::vector<MetricsRow>& v) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : v) arr.push_back(row_json(r));
    return arr;
  };
  j["by_length"] = rows(report.by_length);
  j["by_phi"] = rows(report.by_phi);
  j["by_length_and_phi"] = rows(report.by_length_and_phi);
  j["warnings"] = report.warnings();
  return j.dump(2) + "\n";
}

std::string to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "length,phi,streams,private_occurrences,detected,concealed,privacy_preservation_ratio,"
         "non_private_total,non_private_preservation_ratio,frames,spec_satisfaction_rate,"
         "committed_frames,committed_satisfaction_rate\n";
  for (const auto& r : report.by_length_and_phi) {
    out << r.length << ',' << r.phi << ',' << r.streams << ',' << r.privacy.occurrences << ','
        << r.privacy.detected << ',' << r.privacy.concealed << ',' << r.privacy.ratio().value() << ','
        << r.non_private.denominator << ',' << r.non_private.value() << ',' << r.satisfaction.denominator << ','
        << r.satisfaction.value() << ',' << r.committed.denominator << ',' << r.committed.value() << '\n';
  }
  return out.str();
}

}  // namespace privstream
