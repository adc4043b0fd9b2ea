#pragma once

// Privacy specifications of the form G(body), where body is a propositional
// formula over named object classes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "privstream/error.hpp"

namespace privstream {

// Upper bound accepted anywhere an assignment is stored as a bit pattern.
inline constexpr std::size_t kMaxAssignmentBits = 24;
inline constexpr std::size_t kDefaultPropositionCap = 16;

struct FormulaNode;
using NodePtr = std::shared_ptr<const FormulaNode>;

struct Atom {
  std::string name;
  std::size_t index = 0;  // position in the owning spec's proposition list
};
struct Not {
  NodePtr child;
};
struct And {
  NodePtr lhs, rhs;
};
struct Or {
  NodePtr lhs, rhs;
};
struct Implies {
  NodePtr lhs, rhs;
};

struct FormulaNode {
  std::variant<Atom, Not, And, Or, Implies> op;
};

// Structural equality: same operators, same atom names.
bool structurally_equal(const FormulaNode& a, const FormulaNode& b);

// A total truth assignment over an ordered proposition list.
//
// Bit layout: the first proposition is the most significant bit, so counting
// bits() upward from 0 walks assignments in lexicographic order with
// false < true.
class Assignment {
 public:
  Assignment() = default;
  Assignment(std::size_t size, std::uint32_t bits);

  static Assignment from_values(const std::vector<bool>& values);

  std::size_t size() const { return size_; }
  std::uint32_t bits() const { return bits_; }
  bool operator[](std::size_t i) const { return (bits_ >> (size_ - 1 - i)) & 1u; }
  Assignment with(std::size_t i, bool value) const;

  friend bool operator==(const Assignment&, const Assignment&) = default;
  friend auto operator<=>(const Assignment&, const Assignment&) = default;

 private:
  std::size_t size_ = 0;
  std::uint32_t bits_ = 0;
};

// Parsed G(body). Immutable; safe to share across threads.
class SpecFormula {
 public:
  SpecFormula(NodePtr body, std::vector<std::string> props);

  const FormulaNode& body() const { return *body_; }
  const NodePtr& body_ptr() const { return body_; }
  // Atomic propositions in first-appearance order.
  const std::vector<std::string>& props() const { return props_; }
  std::size_t num_props() const { return props_.size(); }

  // Index of `name` in props(), or npos.
  std::size_t index_of(std::string_view name) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Re-parseable concrete syntax.
  std::string to_string() const;

 private:
  NodePtr body_;
  std::vector<std::string> props_;
};

SpecFormula parse_spec(std::string_view source);

// Standard propositional semantics; throws UnknownProposition when an atom
// has no value in `values`.
bool evaluate(const FormulaNode& formula, const std::map<std::string, bool>& values);

// Fast path keyed by atom index. `a` must be sized to the owning spec.
bool evaluate(const FormulaNode& formula, const Assignment& a);

bool satisfies(const SpecFormula& spec, const Assignment& a);

// All satisfying assignments, lexicographic by bit pattern.
std::vector<Assignment> satisfying_assignments(const SpecFormula& spec,
                                               std::size_t cap = kDefaultPropositionCap);

// Number of distinct propositions.
std::size_t specification_complexity(const SpecFormula& spec);

// Infix rendering of a body with minimal parentheses.
std::string to_string(const FormulaNode& formula);

// Map-form view of an assignment, keyed by proposition name.
std::map<std::string, bool> to_map(const SpecFormula& spec, const Assignment& a);

}  // namespace privstream
