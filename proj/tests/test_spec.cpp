#include <random>

#include "doctest.h"
#include "corpus.hpp"
#include "oracles.hpp"
#include "privstream/spec.hpp"

using namespace privstream;

namespace {

bool eval_map(const SpecFormula& s, std::map<std::string, bool> values) { return evaluate(s.body(), values); }

const FormulaNode& child(const NodePtr& p) { return *p; }

}  // namespace

TEST_CASE("person implies not face") {
  const auto s = parse_spec("G(person -> !face)");
  CHECK(s.props() == std::vector<std::string>{"person", "face"});
  const auto* imp = std::get_if<Implies>(&s.body().op);
  REQUIRE(imp);
  const auto* lhs = std::get_if<Atom>(&child(imp->lhs).op);
  REQUIRE(lhs);
  CHECK(lhs->name == "person");
  const auto* rhs = std::get_if<Not>(&child(imp->rhs).op);
  REQUIRE(rhs);
  CHECK(std::get<Atom>(child(rhs->child).op).name == "face");

  CHECK(eval_map(s, {{"person", true}, {"face", false}}));
  CHECK_FALSE(eval_map(s, {{"person", true}, {"face", true}}));
  CHECK(eval_map(s, {{"person", false}, {"face", true}}));
  CHECK_THROWS_AS(eval_map(s, {{"person", true}}), UnknownProposition);
}

TEST_CASE("conjunctions fold to the left") {
  const auto s = parse_spec("G(!laptop & !medication & !person)");
  const auto* outer = std::get_if<And>(&s.body().op);
  REQUIRE(outer);
  const auto* inner = std::get_if<And>(&child(outer->lhs).op);
  REQUIRE(inner);
  CHECK(std::holds_alternative<Not>(child(inner->lhs).op));
  CHECK(std::holds_alternative<Not>(child(inner->rhs).op));
  CHECK(std::holds_alternative<Not>(child(outer->rhs).op));
  const auto sat = satisfying_assignments(s);
  REQUIRE(sat.size() == 1);
  CHECK(sat[0].bits() == 0);
}

TEST_CASE("precedence and associativity") {
  const auto a = parse_spec("G(!a & b | c -> d)");
  const auto b = parse_spec("G(((!a & b) | c) -> d)");
  CHECK(structurally_equal(a.body(), b.body()));
  const auto r = parse_spec("G(a -> b -> c)");
  const auto r2 = parse_spec("G(a -> (b -> c))");
  CHECK(structurally_equal(r.body(), r2.body()));
  CHECK_FALSE(structurally_equal(r.body(), parse_spec("G((a -> b) -> c)").body()));
  CHECK(structurally_equal(parse_spec("G(a | b | c)").body(), parse_spec("G((a | b) | c)").body()));
}

TEST_CASE("alternative spellings") {
  const auto base = parse_spec("G(!a & b | c -> d)");
  for (const char* src : {"always(not a and b or c implies d)", "\xE2\x96\xA1(\xC2\xAC a \xE2\x88\xA7 b \xE2\x88\xA8 c \xE2\x86\x92 d)",
                          "G(!a && b || c -> d)", "G( # comment\n !a & b | c -> d )"}) {
    CAPTURE(src);
    CHECK(structurally_equal(parse_spec(src).body(), base.body()));
  }
  const auto q = parse_spec("G(!\"road sign\")");
  CHECK(q.props() == std::vector<std::string>{"road sign"});
  CHECK(parse_spec(q.to_string()).props() == q.props());
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(parse_spec("person -> !face"), MissingAlways);
  CHECK_THROWS_AS(parse_spec("G(a -> X b)"), NestedTemporal);
  CHECK_THROWS_AS(parse_spec("G(a & G(b))"), NestedTemporal);
  CHECK_THROWS_AS(parse_spec("G(a & eventually b)"), NestedTemporal);
  CHECK_THROWS_AS(parse_spec("G(a &)"), SyntaxError);
  CHECK_THROWS_AS(parse_spec("G(a b)"), SyntaxError);
  CHECK_THROWS_AS(parse_spec("G(a) b"), SyntaxError);
  CHECK_THROWS_AS(parse_spec("G(\"unterminated)"), SyntaxError);
  try {
    parse_spec("G(a &\n  $)");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 3);
  }
}

TEST_CASE("satisfying assignments of person -> !face") {
  const auto s = parse_spec("G(person -> !face)");
  const auto sat = satisfying_assignments(s);
  REQUIRE(sat.size() == 3);
  CHECK(sat[0] == Assignment::from_values({false, false}));
  CHECK(sat[1] == Assignment::from_values({false, true}));
  CHECK(sat[2] == Assignment::from_values({true, false}));
}

TEST_CASE("specification complexity") {
  CHECK(specification_complexity(parse_spec("G(!p1 & !p2 | !p3)")) == 3);
  CHECK(specification_complexity(parse_spec("G(!p)")) == 1);
  CHECK(specification_complexity(parse_spec("G((bicycle -> !person) & (car | bus -> !person))")) == 4);
}

TEST_CASE("too many propositions") {
  std::string body = "p0";
  for (int i = 1; i < 17; ++i) body += " & p" + std::to_string(i);
  const auto s = parse_spec("G(" + body + ")");
  CHECK_THROWS_AS(satisfying_assignments(s), TooManyPropositions);
  CHECK(satisfying_assignments(s, 17).size() == 1);
}

TEST_CASE("assignment bit layout") {
  const auto a = Assignment::from_values({true, false, false});
  CHECK(a.bits() == 4);
  CHECK(a[0]);
  CHECK_FALSE(a[2]);
  CHECK(a.with(2, true).bits() == 5);
  CHECK_THROWS(Assignment(2, 4));
  CHECK_THROWS(Assignment(kMaxAssignmentBits + 1, 0));
}

TEST_CASE("random formulas match the truth-table oracle and round-trip") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 10);
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("v" + std::to_string(i));
    const auto f = oracle::random_formula(rng, n, 1 + static_cast<int>(rng() % 5));
    const std::string text = "G(" + f->text(names, rng) + ")";
    CAPTURE(text);
    const auto s = parse_spec(text);

    std::set<int> used;
    f->vars(used);
    REQUIRE(s.num_props() == used.size());

    // Values over the spec's own proposition order, mapped back to the
    // oracle's variable ids.
    std::vector<int> var_of;
    for (const auto& p : s.props()) var_of.push_back(std::stoi(p.substr(1)));
    auto oracle_eval = [&](const std::vector<bool>& row) {
      std::vector<bool> v(n, false);
      for (std::size_t i = 0; i < row.size(); ++i) v[var_of[i]] = row[i];
      return f->eval(v);
    };

    std::vector<Assignment> expected;
    for (const auto& row : oracle::truth_table_rows(s.num_props())) {
      if (oracle_eval(row)) expected.push_back(Assignment::from_values(row));
    }
    const auto got = satisfying_assignments(s);
    CHECK(got == expected);
    CHECK(got.size() + (oracle::count_models([&](const auto& r) { return !oracle_eval(r); }, s.num_props())) ==
          (std::size_t{1} << s.num_props()));

    const auto again = parse_spec(s.to_string());
    CHECK(structurally_equal(again.body(), s.body()));
    CHECK(again.props() == s.props());
  }
}

TEST_CASE("example corpus") {
  for (const auto& e : corpus::entries()) {
    CAPTURE(e.source);
    const auto s = parse_spec(e.source);
    CHECK(s.props() == e.props);
    std::vector<Assignment> expected;
    for (const auto& row : oracle::truth_table_rows(e.props.size())) {
      if (e.holds(row)) expected.push_back(Assignment::from_values(row));
    }
    CHECK(satisfying_assignments(s) == expected);
    CHECK(structurally_equal(parse_spec(s.to_string()).body(), s.body()));
  }
  CHECK(satisfying_assignments(parse_spec("G((bus | car) -> !plate)")).size() == 5);
  CHECK(satisfying_assignments(parse_spec("G((bicycle -> !person) | (person -> !face))")).size() == 7);
}
