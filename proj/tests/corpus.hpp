#pragma once

// Specifications from the privacy examples, each with a hand-written
// evaluator over the variables in first-appearance order.

#include <functional>
#include <string>
#include <vector>

namespace corpus {

struct Entry {
  std::string name;
  std::string source;
  std::vector<std::string> props;
  std::function<bool(const std::vector<bool>&)> holds;
};

inline std::vector<Entry> entries() {
  return {
      {"hide people, laptops and medication", "G(!laptop & !medication & !person)",
       {"laptop", "medication", "person"},
       [](const std::vector<bool>& v) { return !v[0] && !v[1] && !v[2]; }},
      {"hide road signs", "G(!\"road sign\")", {"road sign"}, [](const std::vector<bool>& v) { return !v[0]; }},
      {"cyclist or face", "G((bicycle -> !person) | (person -> !face))", {"bicycle", "person", "face"},
       [](const std::vector<bool>& v) { return (!v[0] || !v[1]) || (!v[1] || !v[2]); }},
      {"plates on vehicles", "G((bus | car) -> !plate)", {"bus", "car", "plate"},
       [](const std::vector<bool>& v) { return !(v[0] || v[1]) || !v[2]; }},
      {"people near vehicles", "G((bicycle -> !person) & (car | bus -> !person))",
       {"bicycle", "person", "car", "bus"},
       [](const std::vector<bool>& v) { return (!v[0] || !v[1]) && (!(v[2] || v[3]) || !v[1]); }},
  };
}

}  // namespace corpus
