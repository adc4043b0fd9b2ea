#pragma once

// Bounded safety verification by exhaustive trace enumeration. Used as the
// reference the streaming abstraction is checked against, so it deliberately
// shares no code with the incremental update.

#include <cstddef>
#include <span>
#include <vector>

#include "privstream/abstraction.hpp"
#include "privstream/spec.hpp"

namespace privstream {

struct UnrollLimits {
  std::size_t max_frames = 12;
  std::size_t max_props = 4;
  // Upper bound on the number of root-to-leaf traces safety_probability may walk.
  double max_traces = 5e8;
};

// For G(body): a prefix is bad exactly when one of its positions falsifies
// the body.
bool is_bad_prefix(const SpecFormula& spec, std::span<const Assignment> labelings);

// Layered chain without prefix collapse: layer t holds one state per
// assignment with positive mass in frame t (plus an unverified state for
// conservative residual mass), and every state of layer t moves to every
// state of layer t + 1 with that layer's masses.
LabeledMarkovChain unroll(const std::vector<std::string>& props, std::span<const FrameFactor> frames,
                          const UnrollLimits& limits = {});

struct TraceSummary {
  double safe_probability = 0.0;
  double total_probability = 0.0;
  std::size_t traces = 0;
};

// Depth-first enumeration of every root-to-leaf trace. Prior-violated and
// unverified states count as violating positions; prior-satisfied counts as a
// satisfying one; the initial state carries no label.
TraceSummary enumerate_traces(const LabeledMarkovChain& chain, const SpecFormula& spec,
                              const UnrollLimits& limits = {});

double safety_probability(const LabeledMarkovChain& chain, const SpecFormula& spec,
                          const UnrollLimits& limits = {});

// Same quantity by forward propagation of the not-yet-violated mass; linear
// in the number of transitions. Requires an acyclic chain.
double safety_probability_forward(const LabeledMarkovChain& chain, const SpecFormula& spec);

}  // namespace privstream
