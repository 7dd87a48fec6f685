#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace golden {

struct Case {
  std::string fixture;  // relative to tests/fixtures
  std::string golden;   // file name under tests/golden
  std::int64_t gsize = 0;
  std::int64_t lsize = 0;
};

// The five prompt golden cases.
const std::vector<Case>& cases();

// Renders a case end to end: ingest, signature, memory-analysis inputs on the
// synthetic backend, prompt text.
std::string render(const Case& c);

}  // namespace golden
