#pragma once

// Streaming probabilistic guarantee over a frame sequence.
//
// All frames seen so far are collapsed into two states of a labeled Markov
// chain (prior satisfied / prior violated), so the per-frame update costs
// O(2^|AP|) no matter how long the stream has run.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "privstream/conformal.hpp"
#include "privstream/detection.hpp"
#include "privstream/spec.hpp"

namespace privstream {

enum class FactorMode {
  // Every assignment gets prod_p (q_p on agreement with the detector's
  // decision, 1 - q_p on disagreement); the factor is the mass on assignments
  // that satisfy the body.
  Distributional,
  // prod_p q_p when the decided assignment satisfies the body, else 0. The
  // remaining mass is kept as an unverified outcome.
  Conservative,
};

const char* to_string(FactorMode mode);
FactorMode parse_factor_mode(std::string_view text);

enum class StateKind { Initial, PriorViolated, PriorSatisfied, Observation, Unverified };

struct ChainState {
  StateKind kind = StateKind::Initial;
  std::optional<Assignment> labeling;  // Observation states only
};

struct LabeledMarkovChain {
  std::vector<std::string> props;
  std::vector<ChainState> states;  // state id = index
  std::size_t initial = 0;
  std::map<std::pair<std::size_t, std::size_t>, double> transitions;

  std::size_t add_state(StateKind kind, std::optional<Assignment> labeling = std::nullopt);
  void set(std::size_t from, std::size_t to, double p) { transitions[{from, to}] = p; }
  double probability(std::size_t from, std::size_t to) const;
  std::vector<std::pair<std::size_t, double>> successors(std::size_t s) const;
  bool is_terminal(std::size_t s) const;
  // Every non-terminal row sums to 1 within `tol` and all entries lie in [0, 1].
  bool is_row_stochastic(double tol = 1e-9) const;
};

std::string to_dot(const LabeledMarkovChain& chain);
std::string to_json(const LabeledMarkovChain& chain);
LabeledMarkovChain chain_from_json(std::string_view text);

// Per-proposition calibrated view of one frame.
struct CalibratedFrame {
  Assignment decided;          // bit set iff confidence > 0.5
  std::vector<double> quality;  // q_p = f_C(confidence_p), in props order
};

CalibratedFrame calibrate_frame(const SpecFormula& spec, const Calibrator& calib,
                                const FrameDetections& fd);

struct FrameFactor {
  double value = 1.0;
  FactorMode mode = FactorMode::Distributional;
  std::size_t num_props = 0;
  // Indexed by Assignment::bits(); size 2^num_props.
  std::vector<double> per_assignment;
  // Conservative mode only: mass not attributed to any assignment.
  double unverified_mass = 0.0;

  double mass(const Assignment& a) const { return per_assignment[a.bits()]; }

  // A frame known with certainty to carry assignment `a`.
  static FrameFactor certain(const SpecFormula& spec, const Assignment& a);
};

// Precomputed satisfying set of a specification, reused across frames.
class SatisfactionTable {
 public:
  explicit SatisfactionTable(const SpecFormula& spec, std::size_t cap = kDefaultPropositionCap);
  bool operator[](std::uint32_t bits) const { return sat_[bits] != 0; }
  std::size_t num_props() const { return num_props_; }

 private:
  std::size_t num_props_;
  std::vector<char> sat_;
};

FrameFactor frame_factor(const SatisfactionTable& table, const CalibratedFrame& frame, FactorMode mode);

// Throws IncompleteDetections when fd lacks a proposition of the spec.
FrameFactor frame_factor(const SpecFormula& spec, const Calibrator& calib, const FrameDetections& fd,
                         FactorMode mode);

// Single-frame abstraction: state 0 initial, 1 prior-violated, 2
// prior-satisfied, then one state per assignment with positive mass, reached
// from both 1 and 2. A conservative factor with unverified mass adds one more
// state for it.
LabeledMarkovChain build_frame_chain(const std::vector<std::string>& props, double prior_pg,
                                     const FrameFactor& factor);

class AbstractionState {
 public:
  AbstractionState(SpecFormula spec, Calibrator calib, FactorMode mode = FactorMode::Distributional);

  // pg <- pg * factor(fd); returns the factor applied.
  FrameFactor update(const FrameDetections& fd);
  // Applies a factor computed elsewhere (e.g. by the concealment loop).
  void apply(const FrameFactor& factor);
  void reset();

  double pg() const;
  double log_pg() const { return log_pg_; }
  std::uint64_t k() const { return k_; }
  const LabeledMarkovChain& last_chain() const { return last_chain_; }

  const SpecFormula& spec() const { return spec_; }
  const Calibrator& calibrator() const { return calib_; }
  const SatisfactionTable& table() const { return table_; }
  FactorMode mode() const { return mode_; }

 private:
  SpecFormula spec_;
  Calibrator calib_;
  FactorMode mode_;
  SatisfactionTable table_;
  double log_pg_ = 0.0;
  std::uint64_t k_ = 0;
  LabeledMarkovChain last_chain_;
};

}  // namespace privstream
