#include "eflash/program_verify.hpp"

#include <algorithm>
#include <string>

#include "eflash/errors.hpp"

namespace eflash {

void StateStats::add(double vt) noexcept {
  ++cells;
  min_vt_mv = std::min(min_vt_mv, vt);
  max_vt_mv = std::max(max_vt_mv, vt);
  sum_vt_mv += vt;
}

void StateStats::merge(const StateStats& other) noexcept {
  cells += other.cells;
  min_vt_mv = std::min(min_vt_mv, other.min_vt_mv);
  max_vt_mv = std::max(max_vt_mv, other.max_vt_mv);
  sum_vt_mv += other.sum_vt_mv;
}

std::uint64_t MarginReport::total_pulses() const noexcept {
  std::uint64_t n = 0;
  for (auto p : pulses) n += p;
  return n;
}

std::optional<double> MarginReport::lower_margin_mv(int state,
                                                    const ReferenceLadder& ladder) const {
  if (state < 1 || state >= kNumStates || states[state].cells == 0) return std::nullopt;
  return states[state].min_vt_mv - ladder.read_mv[state - 1];
}

std::optional<double> MarginReport::upper_margin_mv(int state,
                                                    const ReferenceLadder& ladder) const {
  if (state < 0 || state >= kNumStates - 1 || states[state].cells == 0) return std::nullopt;
  return ladder.read_mv[state] - states[state].max_vt_mv;
}

void MarginReport::merge(const MarginReport& other) noexcept {
  for (int s = 0; s < kNumStates; ++s) {
    states[s].merge(other.states[s]);
    pulses[s] += other.pulses[s];
  }
  max_pulses_one_cell = std::max(max_pulses_one_cell, other.max_pulses_one_cell);
}

MarginReport program_row(EflashMacro& macro, const ProgramJob& job,
                         std::vector<PulseEvent>* trace) {
  if (job.max_pulses_per_cell < 1) throw DomainError("max_pulses_per_cell must be >= 1");
  const auto& codec = macro.codec();

  const RowStates current = macro.peek_row(job.bank, job.row);
  for (std::size_t c = 0; c < kCellsPerRow; ++c) {
    if (current[c].index() != 0) {
      throw RowNotErased("bank " + std::to_string(job.bank) + " row " +
                         std::to_string(job.row) + " col " + std::to_string(c) +
                         " is not erased");
    }
  }

  MarginReport report;
  std::array<int, kCellsPerRow> pulses_used{};
  std::vector<std::size_t> pending;
  pending.reserve(kCellsPerRow);

  for (int s = 1; s < kNumStates; ++s) {
    pending.clear();
    for (std::size_t c = 0; c < kCellsPerRow; ++c) {
      if (job.targets[c].index() == s) pending.push_back(c);
    }
    if (pending.empty()) continue;

    const double verify = codec.verify_level(CellState(s));
    if (!macro.analog().reachable(verify)) {
      throw UnreachableReference(verify, macro.analog().driver().reference_limit_mv());
    }

    // Row-parallel rounds: pulse every cell still below its verify level,
    // then verify and inhibit the ones that passed.
    while (!pending.empty()) {
      for (auto c : pending) {
        if (pulses_used[c] == job.max_pulses_per_cell) {
          throw VerifyTimeout(job.bank, job.row, c, s, pulses_used[c]);
        }
        macro.program_pulse(job.bank, job.row, c);
        ++pulses_used[c];
        ++report.pulses[s];
        if (trace) trace->push_back({s, static_cast<std::uint16_t>(c)});
      }
      std::erase_if(pending, [&](std::size_t c) {
        return macro.sense(job.bank, job.row, c, verify);
      });
    }
  }

  for (std::size_t c = 0; c < kCellsPerRow; ++c) {
    report.states[job.targets[c].index()].add(macro.vt_mv(job.bank, job.row, c));
    report.max_pulses_one_cell =
        std::max<std::uint64_t>(report.max_pulses_one_cell, static_cast<std::uint64_t>(pulses_used[c]));
  }
  macro.mark_programmed(job.bank, job.row);
  return report;
}

ProgramSummary program_pattern(EflashMacro& macro, std::span<const std::int8_t> weights,
                               std::size_t first_row, int max_pulses_per_cell) {
  ProgramSummary summary;
  summary.first_row = first_row;
  summary.weights = weights.size();
  if (weights.empty()) return summary;

  const std::size_t rows = rows_for(weights.size());
  if (first_row + rows > macro.geometry().total_rows()) {
    throw CapacityError(std::to_string(weights.size()) + " weights starting at row " +
                        std::to_string(first_row) + " exceed the macro capacity of " +
                        std::to_string(macro.geometry().total_rows()) + " rows");
  }
  summary.rows = rows;
  summary.padded_cells = rows * kCellsPerRow - weights.size();

  const auto& codec = macro.codec();
  const bool was_regulated = macro.analog().pump().regulated;
  if (!was_regulated) macro.analog().power_up();

  for (std::size_t r = 0; r < rows; ++r) {
    const RowAddress addr = macro.row_address(first_row + r);
    ProgramJob job;
    job.bank = addr.bank;
    job.row = addr.row;
    job.max_pulses_per_cell = max_pulses_per_cell;
    for (std::size_t c = 0; c < kCellsPerRow; ++c) {
      const std::size_t k = r * kCellsPerRow + c;
      job.targets[c] = k < weights.size() ? codec.encode_weight(WeightNibble(weights[k]))
                                          : CellState(0);
    }
    summary.margins.merge(program_row(macro, job));
  }

  if (!was_regulated) macro.analog().power_down();
  return summary;
}

}  // namespace eflash
