#pragma once

#include <random>
#include <vector>

#include "eflash/cell_array.hpp"

namespace testing {

inline eflash::MacroConfig small_config(std::size_t banks = 1, std::size_t rows = 8, std::uint64_t seed = 3) {
  eflash::MacroConfig cfg;
  cfg.geometry.banks = banks;
  cfg.geometry.rows_per_bank = rows;
  cfg.seed = seed;
  return cfg;
}

inline eflash::MacroConfig noiseless(std::size_t banks = 1, std::size_t rows = 8, std::uint64_t seed = 3) {
  auto cfg = small_config(banks, rows, seed);
  cfg.cells.erased_sigma_mv = 0.0;
  cfg.cells.step_sigma_mv = 0.0;
  return cfg;
}

inline std::vector<std::int8_t> random_weights(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> w(-8, 7);
  std::vector<std::int8_t> out(n);
  for (auto& v : out) v = static_cast<std::int8_t>(w(gen));
  return out;
}

}  // namespace testing
