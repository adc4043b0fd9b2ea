#include "privstream/abstraction.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace privstream {

namespace {

using json = nlohmann::ordered_json;

const char* kind_name(StateKind k) {
  switch (k) {
    case StateKind::Initial: return "initial";
    case StateKind::PriorViolated: return "prior-violated";
    case StateKind::PriorSatisfied: return "prior-satisfied";
    case StateKind::Observation: return "observation";
    case StateKind::Unverified: return "unverified";
  }
  return "?";
}

StateKind kind_from_name(const std::string& s) {
  if (s == "initial") return StateKind::Initial;
  if (s == "prior-violated") return StateKind::PriorViolated;
  if (s == "prior-satisfied") return StateKind::PriorSatisfied;
  if (s == "observation") return StateKind::Observation;
  if (s == "unverified") return StateKind::Unverified;
  throw Error("unknown chain state kind '" + s + "'");
}

std::string labeling_text(const std::vector<std::string>& props, const Assignment& a) {
  std::string out;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (!out.empty()) out += " & ";
    out += (a[i] ? "" : "!") + props[i];
  }
  return out.empty() ? "true" : out;
}

}  // namespace

const char* to_string(FactorMode mode) {
  return mode == FactorMode::Distributional ? "distributional" : "conservative";
}

FactorMode parse_factor_mode(std::string_view text) {
  if (text == "distributional") return FactorMode::Distributional;
  if (text == "conservative") return FactorMode::Conservative;
  throw Error("unknown factor mode '" + std::string(text) + "'");
}

std::size_t LabeledMarkovChain::add_state(StateKind kind, std::optional<Assignment> labeling) {
  states.push_back({kind, std::move(labeling)});
  return states.size() - 1;
}

double LabeledMarkovChain::probability(std::size_t from, std::size_t to) const {
  const auto it = transitions.find({from, to});
  return it == transitions.end() ? 0.0 : it->second;
}

std::vector<std::pair<std::size_t, double>> LabeledMarkovChain::successors(std::size_t s) const {
  std::vector<std::pair<std::size_t, double>> out;
  for (auto it = transitions.lower_bound({s, 0}); it != transitions.end() && it->first.first == s; ++it) {
    out.emplace_back(it->first.second, it->second);
  }
  return out;
}

bool LabeledMarkovChain::is_terminal(std::size_t s) const {
  const auto it = transitions.lower_bound({s, 0});
  return it == transitions.end() || it->first.first != s;
}

bool LabeledMarkovChain::is_row_stochastic(double tol) const {
  for (const auto& [edge, p] : transitions) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    if (edge.first >= states.size() || edge.second >= states.size()) return false;
  }
  for (std::size_t s = 0; s < states.size(); ++s) {
    if (is_terminal(s)) continue;
    double sum = 0.0;
    for (const auto& [to, p] : successors(s)) sum += p;
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

std::string to_dot(const LabeledMarkovChain& chain) {
  std::ostringstream os;
  os << "digraph abstraction {\n  rankdir=LR;\n";
  for (std::size_t s = 0; s < chain.states.size(); ++s) {
    const auto& st = chain.states[s];
    std::string label = std::to_string(s) + ": ";
    if (st.kind == StateKind::Observation && st.labeling) {
      label += labeling_text(chain.props, *st.labeling);
    } else {
      label += kind_name(st.kind);
    }
    os << "  s" << s << " [label=\"" << label << "\"" << (s == chain.initial ? ", shape=doublecircle" : "")
       << "];\n";
  }
  for (const auto& [edge, p] : chain.transitions) {
    os << "  s" << edge.first << " -> s" << edge.second << " [label=\"" << p << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

std::string to_json(const LabeledMarkovChain& chain) {
  json j;
  j["props"] = chain.props;
  j["initial"] = chain.initial;
  json states = json::array();
  for (std::size_t s = 0; s < chain.states.size(); ++s) {
    json st;
    st["id"] = s;
    st["kind"] = kind_name(chain.states[s].kind);
    if (const auto& lab = chain.states[s].labeling) {
      json l = json::object();
      for (std::size_t i = 0; i < chain.props.size(); ++i) l[chain.props[i]] = (*lab)[i];
      st["labeling"] = std::move(l);
    }
    states.push_back(std::move(st));
  }
  j["states"] = std::move(states);
  json edges = json::array();
  for (const auto& [edge, p] : chain.transitions) edges.push_back(json::array({edge.first, edge.second, p}));
  j["transitions"] = std::move(edges);
  return j.dump();
}

LabeledMarkovChain chain_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    LabeledMarkovChain c;
    c.props = j.at("props").get<std::vector<std::string>>();
    c.initial = j.at("initial").get<std::size_t>();
    for (const auto& st : j.at("states")) {
      if (st.at("id").get<std::size_t>() != c.states.size()) throw Error("chain state ids must be dense");
      std::optional<Assignment> lab;
      if (st.contains("labeling")) {
        std::vector<bool> values;
        for (const auto& p : c.props) values.push_back(st["labeling"].at(p).get<bool>());
        lab = Assignment::from_values(values);
      }
      c.add_state(kind_from_name(st.at("kind").get<std::string>()), lab);
    }
    for (const auto& e : j.at("transitions")) {
      c.set(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("chain JSON: ") + e.what(), 1);
  }
}

CalibratedFrame calibrate_frame(const SpecFormula& spec, const Calibrator& calib,
                                const FrameDetections& fd) {
  CalibratedFrame out;
  out.quality.reserve(spec.num_props());
  std::uint32_t bits = 0;
  for (const auto& p : spec.props()) {
    const auto it = fd.per_prop.find(p);
    if (it == fd.per_prop.end()) {
      throw IncompleteDetections("frame " + std::to_string(fd.frame_id) + " has no entry for '" + p + "'");
    }
    const double c = it->second.confidence;
    bits = (bits << 1) | (c > 0.5 ? 1u : 0u);
    out.quality.push_back(calib.calibrate(p, c));
  }
  out.decided = Assignment(spec.num_props(), bits);
  return out;
}

FrameFactor FrameFactor::certain(const SpecFormula& spec, const Assignment& a) {
  FrameFactor f;
  f.num_props = spec.num_props();
  f.per_assignment.assign(std::size_t{1} << f.num_props, 0.0);
  f.per_assignment[a.bits()] = 1.0;
  f.value = satisfies(spec, a) ? 1.0 : 0.0;
  return f;
}

SatisfactionTable::SatisfactionTable(const SpecFormula& spec, std::size_t cap)
    : num_props_(spec.num_props()), sat_(std::size_t{1} << spec.num_props(), 0) {
  for (const auto& a : satisfying_assignments(spec, cap)) sat_[a.bits()] = 1;
}

FrameFactor frame_factor(const SatisfactionTable& table, const CalibratedFrame& frame, FactorMode mode) {
  const std::size_t n = table.num_props();
  if (frame.quality.size() != n || frame.decided.size() != n) {
    throw IncompleteDetections("calibrated frame does not cover the specification");
  }
  FrameFactor f;
  f.mode = mode;
  f.num_props = n;
  if (mode == FactorMode::Conservative) {
    double prod = 1.0;
    for (double q : frame.quality) prod *= q;
    f.per_assignment.assign(std::size_t{1} << n, 0.0);
    f.per_assignment[frame.decided.bits()] = prod;
    f.unverified_mass = 1.0 - prod;
    f.value = table[frame.decided.bits()] ? prod : 0.0;
    return f;
  }
  // Grow the table one proposition at a time; the first proposition ends up
  // as the most significant bit.
  std::vector<double>& mass = f.per_assignment;
  mass.reserve(std::size_t{1} << n);
  mass.push_back(1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double q = frame.quality[i];
    const bool dec = frame.decided[i];
    const double p_true = dec ? q : 1.0 - q;
    const double p_false = dec ? 1.0 - q : q;
    const std::size_t width = mass.size();
    mass.resize(width * 2);
    for (std::size_t b = width; b-- > 0;) {
      const double m = mass[b];
      mass[2 * b] = m * p_false;
      mass[2 * b + 1] = m * p_true;
    }
  }
  double value = 0.0;
  for (std::uint32_t b = 0; b < mass.size(); ++b) {
    if (table[b]) value += mass[b];
  }
  f.value = std::min(value, 1.0);
  return f;
}

FrameFactor frame_factor(const SpecFormula& spec, const Calibrator& calib, const FrameDetections& fd,
                         FactorMode mode) {
  return frame_factor(SatisfactionTable(spec), calibrate_frame(spec, calib, fd), mode);
}

LabeledMarkovChain build_frame_chain(const std::vector<std::string>& props, double prior_pg,
                                     const FrameFactor& factor) {
  if (!(prior_pg >= 0.0 && prior_pg <= 1.0)) throw Error("prior guarantee must lie in [0, 1]");
  LabeledMarkovChain c;
  c.props = props;
  c.initial = c.add_state(StateKind::Initial);
  const std::size_t violated = c.add_state(StateKind::PriorViolated);
  const std::size_t satisfied = c.add_state(StateKind::PriorSatisfied);
  c.set(c.initial, violated, 1.0 - prior_pg);
  c.set(c.initial, satisfied, prior_pg);
  for (std::uint32_t b = 0; b < factor.per_assignment.size(); ++b) {
    const double p = factor.per_assignment[b];
    if (!(p > 0.0)) continue;
    const std::size_t s = c.add_state(StateKind::Observation, Assignment(factor.num_props, b));
    c.set(violated, s, p);
    c.set(satisfied, s, p);
  }
  if (factor.unverified_mass > 0.0) {
    const std::size_t s = c.add_state(StateKind::Unverified);
    c.set(violated, s, factor.unverified_mass);
    c.set(satisfied, s, factor.unverified_mass);
  }
  return c;
}

AbstractionState::AbstractionState(SpecFormula spec, Calibrator calib, FactorMode mode)
    : spec_(std::move(spec)), calib_(std::move(calib)), mode_(mode), table_(spec_) {}

FrameFactor AbstractionState::update(const FrameDetections& fd) {
  FrameFactor f = frame_factor(table_, calibrate_frame(spec_, calib_, fd), mode_);
  apply(f);
  return f;
}

void AbstractionState::apply(const FrameFactor& factor) {
  if (!(factor.value >= 0.0 && factor.value <= 1.0)) throw Error("frame factor must lie in [0, 1]");
  last_chain_ = build_frame_chain(spec_.props(), pg(), factor);
  log_pg_ = factor.value > 0.0 ? log_pg_ + std::log(factor.value)
                               : -std::numeric_limits<double>::infinity();
  ++k_;
}

void AbstractionState::reset() {
  log_pg_ = 0.0;
  k_ = 0;
  last_chain_ = {};
}

double AbstractionState::pg() const {
  const double v = std::exp(log_pg_);
  return v < 1e-300 ? 0.0 : v;
}

}  // namespace privstream
