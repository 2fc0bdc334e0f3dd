#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "eflash/analog.hpp"
#include "eflash/state_codec.hpp"

namespace eflash {

inline constexpr std::size_t kCellsPerRow = 256;
// 4 Mb at 4 bits per cell.
inline constexpr std::size_t kMaxMacroCells = 1u << 20;
// VT is stored in fixed point, 1/16 mV per tick.
inline constexpr double kVtTicksPerMv = 16.0;

enum class Exec { serial, parallel };

struct Geometry {
  std::size_t banks = 4;
  std::size_t rows_per_bank = 64;
  std::size_t max_cells = kMaxMacroCells;

  std::size_t total_rows() const noexcept { return banks * rows_per_bank; }
  std::size_t total_cells() const noexcept { return total_rows() * kCellsPerRow; }
  void validate() const;
};

// Behavioral cell parameters. Erased VT ~ N(erased_mean, erased_sigma) clamped
// at 0; each program pulse adds max(0, N(step_mean, step_sigma)).
struct CellModel {
  double erased_mean_mv = 400.0;
  double erased_sigma_mv = 20.0;
  double step_mean_mv = 40.0;
  double step_sigma_mv = 4.0;
  // Minimum WL program voltage accepted by program_pulse.
  double vpgm_min_mv = 9500.0;

  void validate() const;
};

struct MacroConfig {
  Geometry geometry{};
  CellModel cells{};
  StateCodec codec{};
  PumpParams pump{};
  WlDriverConfig driver{};
  std::uint64_t seed = 1;

  void validate() const;
};

// Retention stress: vt' = vt - loss_fraction * (vt - erased_mean) + N(0, sigma).
// hours and temp_c are carried into reports only.
struct DriftParams {
  double loss_fraction = 0.0;
  double sigma_mv = 0.0;
  double hours = 0.0;
  double temp_c = 125.0;

  void validate() const;
};

struct DriftReport {
  DriftParams params{};
  // transitions[before][after] = number of cells read as `before` prior to
  // the bake and as `after` following it.
  std::array<std::array<std::uint64_t, kNumStates>, kNumStates> transitions{};

  std::uint64_t total_cells() const noexcept;
  std::uint64_t misreads() const noexcept;
  // Misreads whose state moved by exactly one.
  std::uint64_t adjacent_misreads() const noexcept;
  // Misreads whose decoded weight moved by two or more.
  std::uint64_t far_misreads(const StateMap& map) const noexcept;
  double misread_fraction() const noexcept;
};

struct HistogramSelection {
  std::optional<std::size_t> bank;  // all banks when empty
  std::size_t row_begin = 0;        // rows within each selected bank
  std::optional<std::size_t> row_end;
};

struct Histogram {
  double bin_mv = 10.0;
  double lo_mv = 0.0;
  std::vector<std::uint64_t> counts;

  double bin_left_mv(std::size_t i) const noexcept { return lo_mv + bin_mv * static_cast<double>(i); }
  std::uint64_t total() const noexcept;
  // Maximal runs of non-empty bins.
  std::size_t clusters() const noexcept;
};

using RowStates = std::array<CellState, kCellsPerRow>;

struct RowAddress {
  std::size_t bank = 0;
  std::size_t row = 0;
};

// VT-scalar model of the 4-bits/cell weight macro. Single writer; copy the
// whole object to give another thread its own instance.
class EflashMacro {
 public:
  explicit EflashMacro(MacroConfig config);

  const MacroConfig& config() const noexcept { return config_; }
  const Geometry& geometry() const noexcept { return config_.geometry; }
  const StateCodec& codec() const noexcept { return config_.codec; }
  AnalogEnv& analog() noexcept { return analog_; }
  const AnalogEnv& analog() const noexcept { return analog_; }

  RowAddress row_address(std::size_t linear_row) const;

  void erase_bank(std::size_t bank, Exec exec = Exec::parallel);
  void erase_all(Exec exec = Exec::parallel);

  // One program pulse on a single cell. Returns the new VT in mV.
  double program_pulse(std::size_t bank, std::size_t row, std::size_t col);

  // Program-verify read: true iff vt > vref.
  bool sense(std::size_t bank, std::size_t row, std::size_t col, double vref_mv) const;

  // Decodes a full row against the read ladder and counts one read event.
  RowStates read_row(std::size_t bank, std::size_t row);
  // Same decode without the driver check or read accounting.
  RowStates peek_row(std::size_t bank, std::size_t row) const;

  DriftReport apply_bake(const DriftParams& params, Exec exec = Exec::parallel);

  Histogram vt_histogram(const HistogramSelection& selection, double bin_mv,
                         double range_mv = 3000.0) const;

  double vt_mv(std::size_t bank, std::size_t row, std::size_t col) const;
  // Diagnostic hook for tests and fault injection.
  void set_vt_mv(std::size_t bank, std::size_t row, std::size_t col, double vt_mv);

  bool row_programmed(std::size_t bank, std::size_t row) const;
  void mark_programmed(std::size_t bank, std::size_t row);

  std::uint64_t read_events() const noexcept { return read_events_; }
  std::uint64_t pulses_issued() const noexcept { return pulse_counter_; }

  // Raw state, exposed for serialization.
  struct Counters {
    std::uint64_t erase_epoch = 0;
    std::uint64_t bake_epoch = 0;
    std::uint64_t pulse_counter = 0;
    std::uint64_t read_events = 0;
  };
  std::span<const std::int32_t> vt_ticks() const noexcept { return vt_ticks_; }
  std::span<const std::uint8_t> programmed_flags() const noexcept { return programmed_; }
  Counters counters() const noexcept;
  void restore(std::vector<std::int32_t> vt_ticks, std::vector<std::uint8_t> programmed,
               const Counters& counters);

 private:
  std::size_t cell_index(std::size_t bank, std::size_t row, std::size_t col) const;
  void check_reachable(double vref_mv) const;

  MacroConfig config_;
  AnalogEnv analog_;
  std::vector<std::int32_t> vt_ticks_;
  std::vector<std::uint8_t> programmed_;
  std::uint64_t erase_epoch_ = 0;
  std::uint64_t bake_epoch_ = 0;
  std::uint64_t pulse_counter_ = 0;
  std::uint64_t read_events_ = 0;
};

std::int32_t mv_to_ticks(double mv);
inline double ticks_to_mv(std::int32_t ticks) noexcept { return ticks / kVtTicksPerMv; }

}  // namespace eflash
