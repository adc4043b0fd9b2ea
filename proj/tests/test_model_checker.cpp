#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "privstream/model_checker.hpp"

using namespace privstream;

namespace {

FrameFactor distribution(std::size_t n, std::vector<double> masses, const SpecFormula& spec) {
  FrameFactor f;
  f.num_props = n;
  f.per_assignment = std::move(masses);
  SatisfactionTable table(spec);
  f.value = 0.0;
  for (std::uint32_t b = 0; b < f.per_assignment.size(); ++b) {
    if (table[b]) f.value += f.per_assignment[b];
  }
  return f;
}

std::vector<double> random_masses(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> m(std::size_t{1} << n);
  double total = 0.0;
  for (auto& x : m) {
    x = rng() % 4 == 0 ? 0.0 : u(rng);
    total += x;
  }
  if (total == 0.0) {
    m[0] = 1.0;
    total = 1.0;
  }
  for (auto& x : m) x /= total;
  return m;
}

}  // namespace

TEST_CASE("bad prefixes of person implies not face") {
  const auto spec = parse_spec("G(person -> !face)");
  const std::vector<Assignment> ok = {Assignment::from_values({true, false}), Assignment::from_values({false, false})};
  CHECK_FALSE(is_bad_prefix(spec, ok));
  const std::vector<Assignment> bad = {Assignment::from_values({true, true})};
  CHECK(is_bad_prefix(spec, bad));
  CHECK_FALSE(is_bad_prefix(spec, {}));
  std::vector<Assignment> late = ok;
  late.push_back(Assignment::from_values({true, true}));
  late.push_back(Assignment::from_values({false, false}));
  CHECK(is_bad_prefix(spec, late));
}

TEST_CASE("unroll structure") {
  const auto spec = parse_spec("G(!a & !b)");
  const auto f = distribution(2, {0.6, 0.0, 0.4, 0.0}, spec);
  const std::vector<FrameFactor> two = {f, f};
  const auto c = unroll(spec.props(), two);
  CHECK(c.states.size() == 1 + 2 + 2);
  CHECK(c.is_row_stochastic());
  CHECK(unroll(spec.props(), {}).states.size() == 1);

  const std::vector<FrameFactor> many(13, f);
  CHECK_THROWS_AS(unroll(spec.props(), many), StateExplosion);
  const auto wide = parse_spec("G(!a & !b & !c & !d & !e)");
  const std::vector<FrameFactor> one = {FrameFactor::certain(wide, Assignment(5, 0))};
  CHECK_THROWS_AS(unroll(wide.props(), one), StateExplosion);
}

TEST_CASE("the three-frame example") {
  const auto spec = parse_spec("G(!person)");
  // Prior 0.8 as one layer, then a frame with satisfying mass 0.7.
  const std::vector<FrameFactor> frames = {distribution(1, {0.8, 0.2}, spec), distribution(1, {0.7, 0.3}, spec)};
  const auto c = unroll(spec.props(), frames);
  CHECK(std::abs(safety_probability(c, spec) - 0.56) <= 1e-12);
  CHECK(std::abs(safety_probability_forward(c, spec) - 0.56) <= 1e-12);
  const auto t = enumerate_traces(c, spec);
  CHECK(t.traces == 4);
  CHECK(t.total_probability == doctest::Approx(1.0));

  const std::vector<FrameFactor> safe = {distribution(1, {1.0, 0.0}, spec), distribution(1, {1.0, 0.0}, spec)};
  CHECK(safety_probability(unroll(spec.props(), safe), spec) == 1.0);
}

TEST_CASE("enumeration, forward propagation and the product agree") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> specs = {"G(!a)", "G(a -> !b)", "G(!a & !b)", "G((a | b) -> !c)"};
  for (int trial = 0; trial < 120; ++trial) {
    const auto spec = parse_spec(specs[trial % specs.size()]);
    const std::size_t n = spec.num_props();
    const int frames = 1 + static_cast<int>(rng() % 5);
    std::vector<FrameFactor> fs;
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> oks;
    double product = 1.0;
    SatisfactionTable table(spec);
    for (int t = 0; t < frames; ++t) {
      fs.push_back(distribution(n, random_masses(rng, n), spec));
      product *= fs.back().value;
      rows.push_back(fs.back().per_assignment);
      std::vector<bool> ok;
      for (std::uint32_t b = 0; b < rows.back().size(); ++b) ok.push_back(table[b]);
      oks.push_back(ok);
    }
    const auto chain = unroll(spec.props(), fs);
    const auto summary = enumerate_traces(chain, spec);
    CHECK(std::abs(summary.total_probability - 1.0) <= 1e-9);
    CHECK(std::abs(summary.safe_probability - product) <= 1e-9);
    CHECK(std::abs(safety_probability_forward(chain, spec) - product) <= 1e-9);
    CHECK(std::abs(oracle::sequence_safety(rows, oks) - product) <= 1e-9);
  }
}

TEST_CASE("conservative residual mass counts as violating") {
  const auto spec = parse_spec("G(!p)");
  FrameFactor f = FrameFactor::certain(spec, Assignment(1, 0));
  f.mode = FactorMode::Conservative;
  f.per_assignment = {0.9, 0.0};
  f.unverified_mass = 0.1;
  f.value = 0.9;
  const std::vector<FrameFactor> fs = {f, f, f};
  const auto c = unroll(spec.props(), fs);
  CHECK(c.is_row_stochastic());
  CHECK(safety_probability(c, spec) == doctest::Approx(0.729).epsilon(1e-12));
}

TEST_CASE("a frame with factor one changes nothing") {
  const auto spec = parse_spec("G(a -> !b)");
  std::mt19937_64 rng(5);
  std::vector<FrameFactor> fs;
  for (int t = 0; t < 4; ++t) fs.push_back(distribution(2, random_masses(rng, 2), spec));
  const double before = safety_probability(unroll(spec.props(), fs), spec);
  fs.insert(fs.begin() + 2, FrameFactor::certain(spec, Assignment::from_values({true, false})));
  CHECK(safety_probability(unroll(spec.props(), fs), spec) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("trace limit") {
  const auto spec = parse_spec("G(!a & !b)");
  std::mt19937_64 rng(1);
  std::vector<double> full(4, 0.25);
  const std::vector<FrameFactor> fs(10, distribution(2, full, spec));
  UnrollLimits tight;
  tight.max_traces = 1000;
  const auto c = unroll(spec.props(), fs);
  CHECK_THROWS_AS(safety_probability(c, spec, tight), StateExplosion);
  CHECK(safety_probability_forward(c, spec) == doctest::Approx(std::pow(0.25, 10)));
}
