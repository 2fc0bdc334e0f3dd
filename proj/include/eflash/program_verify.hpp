#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "eflash/cell_array.hpp"

namespace eflash {

struct ProgramJob {
  std::size_t bank = 0;
  std::size_t row = 0;
  std::array<CellState, kCellsPerRow> targets{CellState(0)};
  int max_pulses_per_cell = 64;
};

// One entry per pulse, in issue order.
struct PulseEvent {
  int state;
  std::uint16_t col;
};

struct StateStats {
  std::uint64_t cells = 0;
  double min_vt_mv = std::numeric_limits<double>::infinity();
  double max_vt_mv = -std::numeric_limits<double>::infinity();
  double sum_vt_mv = 0.0;

  double mean_vt_mv() const noexcept { return cells ? sum_vt_mv / static_cast<double>(cells) : 0.0; }
  void add(double vt) noexcept;
  void merge(const StateStats& other) noexcept;
};

struct MarginReport {
  std::array<StateStats, kNumStates> states{};
  // Pulses issued per target state.
  std::array<std::uint64_t, kNumStates> pulses{};
  std::uint64_t max_pulses_one_cell = 0;

  std::uint64_t total_pulses() const noexcept;
  // min vt of state k minus read boundary k, for populated states k >= 1.
  std::optional<double> lower_margin_mv(int state, const ReferenceLadder& ladder) const;
  // read boundary k+1 minus max vt of state k, for populated states k <= 14.
  std::optional<double> upper_margin_mv(int state, const ReferenceLadder& ladder) const;
  void merge(const MarginReport& other) noexcept;
};

// Sequential program-verify of one row: states 1..15 in ascending order, each
// cell pulsed and verified until vt > verify_level(target). Cells targeting
// state 0 receive no pulses. Requires an erased row and a regulated pump.
MarginReport program_row(EflashMacro& macro, const ProgramJob& job,
                         std::vector<PulseEvent>* trace = nullptr);

struct ProgramSummary {
  std::size_t first_row = 0;  // linear row address
  std::size_t rows = 0;
  std::size_t weights = 0;
  std::size_t padded_cells = 0;
  MarginReport margins{};
};

// Encodes weights, pads the last row with state 0 and programs rows starting
// at `first_row`. Powers the pump up if needed and back down afterwards.
ProgramSummary program_pattern(EflashMacro& macro, std::span<const std::int8_t> weights,
                               std::size_t first_row = 0, int max_pulses_per_cell = 64);

inline std::size_t rows_for(std::size_t weights) noexcept {
  return (weights + kCellsPerRow - 1) / kCellsPerRow;
}

}  // namespace eflash
