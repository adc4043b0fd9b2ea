#include "privstream/model_checker.hpp"

#include <algorithm>
#include <deque>
#include <functional>

namespace privstream {

namespace {

// Per-state violation flags, evaluated straight from the formula.
std::vector<char> violating_states(const LabeledMarkovChain& chain, const SpecFormula& spec) {
  std::vector<char> bad(chain.states.size(), 0);
  for (std::size_t s = 0; s < chain.states.size(); ++s) {
    const auto& st = chain.states[s];
    switch (st.kind) {
      case StateKind::PriorViolated:
      case StateKind::Unverified:
        bad[s] = 1;
        break;
      case StateKind::Observation:
        if (!st.labeling) throw Error("observation state " + std::to_string(s) + " has no labeling");
        bad[s] = evaluate(spec.body(), *st.labeling) ? 0 : 1;
        break;
      case StateKind::Initial:
      case StateKind::PriorSatisfied:
        break;
    }
  }
  return bad;
}

std::vector<std::vector<std::pair<std::size_t, double>>> adjacency(const LabeledMarkovChain& chain) {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(chain.states.size());
  for (const auto& [edge, p] : chain.transitions) adj.at(edge.first).emplace_back(edge.second, p);
  return adj;
}

std::vector<std::size_t> topological_order(const LabeledMarkovChain& chain,
                                           const std::vector<std::vector<std::pair<std::size_t, double>>>& adj) {
  std::vector<std::size_t> indegree(chain.states.size(), 0);
  for (const auto& row : adj) {
    for (const auto& [to, p] : row) ++indegree[to];
  }
  std::deque<std::size_t> ready;
  for (std::size_t s = 0; s < indegree.size(); ++s) {
    if (indegree[s] == 0) ready.push_back(s);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t s = ready.front();
    ready.pop_front();
    order.push_back(s);
    for (const auto& [to, p] : adj[s]) {
      if (--indegree[to] == 0) ready.push_back(to);
    }
  }
  if (order.size() != chain.states.size()) throw Error("chain has a cycle; bounded verification needs a DAG");
  return order;
}

}  // namespace

bool is_bad_prefix(const SpecFormula& spec, std::span<const Assignment> labelings) {
  return std::any_of(labelings.begin(), labelings.end(),
                     [&](const Assignment& a) { return !evaluate(spec.body(), a); });
}

LabeledMarkovChain unroll(const std::vector<std::string>& props, std::span<const FrameFactor> frames,
                          const UnrollLimits& limits) {
  if (frames.size() > limits.max_frames || props.size() > limits.max_props) {
    throw StateExplosion("unrolling " + std::to_string(frames.size()) + " frames over " +
                         std::to_string(props.size()) + " propositions exceeds the guard (" +
                         std::to_string(limits.max_frames) + " frames, " +
                         std::to_string(limits.max_props) + " propositions)");
  }
  LabeledMarkovChain c;
  c.props = props;
  c.initial = c.add_state(StateKind::Initial);
  std::vector<std::size_t> previous{c.initial};
  for (const auto& f : frames) {
    if (f.num_props != props.size()) throw Error("frame factor does not match the proposition list");
    std::vector<std::pair<std::size_t, double>> layer;
    for (std::uint32_t b = 0; b < f.per_assignment.size(); ++b) {
      if (f.per_assignment[b] > 0.0) {
        layer.emplace_back(c.add_state(StateKind::Observation, Assignment(f.num_props, b)), f.per_assignment[b]);
      }
    }
    if (f.unverified_mass > 0.0) layer.emplace_back(c.add_state(StateKind::Unverified), f.unverified_mass);
    for (std::size_t from : previous) {
      for (const auto& [to, p] : layer) c.set(from, to, p);
    }
    previous.clear();
    for (const auto& [s, p] : layer) previous.push_back(s);
  }
  return c;
}

TraceSummary enumerate_traces(const LabeledMarkovChain& chain, const SpecFormula& spec,
                              const UnrollLimits& limits) {
  const auto adj = adjacency(chain);
  const auto order = topological_order(chain, adj);

  // Path counts, leaves upward, to refuse hopeless enumerations up front.
  std::vector<double> paths(chain.states.size(), 0.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t s = *it;
    if (adj[s].empty()) {
      paths[s] = 1.0;
    } else {
      for (const auto& [to, p] : adj[s]) paths[s] += paths[to];
    }
  }
  if (paths[chain.initial] > limits.max_traces) {
    throw StateExplosion("chain has " + std::to_string(paths[chain.initial]) + " traces; limit is " +
                         std::to_string(limits.max_traces));
  }

  const auto bad = violating_states(chain, spec);
  TraceSummary out;
  std::function<void(std::size_t, double, bool)> walk = [&](std::size_t s, double prob, bool violated) {
    violated = violated || bad[s];
    if (adj[s].empty()) {
      ++out.traces;
      out.total_probability += prob;
      if (!violated) out.safe_probability += prob;
      return;
    }
    for (const auto& [to, p] : adj[s]) walk(to, prob * p, violated);
  };
  walk(chain.initial, 1.0, false);
  return out;
}

double safety_probability(const LabeledMarkovChain& chain, const SpecFormula& spec,
                          const UnrollLimits& limits) {
  return enumerate_traces(chain, spec, limits).safe_probability;
}

double safety_probability_forward(const LabeledMarkovChain& chain, const SpecFormula& spec) {
  const auto adj = adjacency(chain);
  const auto order = topological_order(chain, adj);
  const auto bad = violating_states(chain, spec);
  std::vector<double> mass(chain.states.size(), 0.0);
  mass[chain.initial] = bad[chain.initial] ? 0.0 : 1.0;
  double safe = 0.0;
  for (std::size_t s : order) {
    if (mass[s] == 0.0) continue;
    if (adj[s].empty()) {
      safe += mass[s];
      continue;
    }
    for (const auto& [to, p] : adj[s]) {
      if (!bad[to]) mass[to] += mass[s] * p;
    }
  }
  return safe;
}

}  // namespace privstream
