#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace eflash {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Quick invariant sweep over every module, sized to finish in a few seconds.
std::vector<SelfTestResult> run_selftest(std::uint64_t seed);

void print_selftest_table(std::ostream& out, const std::vector<SelfTestResult>& results);

}  // namespace eflash
