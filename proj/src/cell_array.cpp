#include "eflash/cell_array.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "eflash/errors.hpp"
#include "eflash/rng.hpp"

namespace eflash {

namespace {

// Event tags keep the random streams of different operations apart.
constexpr std::uint64_t kEraseTag = 1ULL << 56;
constexpr std::uint64_t kBakeTag = 2ULL << 56;
constexpr std::uint64_t kPulseTag = 3ULL << 56;

double normal_draw(StreamRng& rng, double mean, double sigma) {
  if (sigma == 0.0) return mean;
  std::normal_distribution<double> dist(mean, sigma);
  return dist(rng);
}

template <typename Body>
void for_cells(std::size_t begin, std::size_t end, Exec exec, Body&& body) {
  const auto b = static_cast<std::ptrdiff_t>(begin);
  const auto e = static_cast<std::ptrdiff_t>(end);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = b; i < e; ++i) body(static_cast<std::size_t>(i));
  } else {
    for (std::ptrdiff_t i = b; i < e; ++i) body(static_cast<std::size_t>(i));
  }
}

}  // namespace

std::int32_t mv_to_ticks(double mv) {
  const double t = std::round(mv * kVtTicksPerMv);
  if (!std::isfinite(t) || t > std::numeric_limits<std::int32_t>::max() ||
      t < std::numeric_limits<std::int32_t>::min()) {
    throw DomainError("threshold voltage out of representable range");
  }
  return static_cast<std::int32_t>(t);
}

void Geometry::validate() const {
  if (banks == 0 || rows_per_bank == 0) throw ConfigError("geometry: banks and rows must be >= 1");
  if (total_cells() > max_cells) {
    throw ConfigError("geometry: " + std::to_string(total_cells()) +
                      " cells exceed the configured capacity of " +
                      std::to_string(max_cells));
  }
}

void CellModel::validate() const {
  if (!std::isfinite(erased_mean_mv) || erased_mean_mv < 0.0) {
    throw ConfigError("cells: erased_mean_mv must be finite and >= 0");
  }
  if (!(erased_sigma_mv >= 0.0)) throw ConfigError("cells: erased_sigma_mv must be >= 0");
  if (!(step_mean_mv > 0.0)) throw ConfigError("cells: step_mean_mv must be > 0");
  if (!(step_sigma_mv >= 0.0)) throw ConfigError("cells: step_sigma_mv must be >= 0");
}

void MacroConfig::validate() const {
  geometry.validate();
  cells.validate();
  codec.ladder().validate();
  pump.validate();
  driver.validate();
}

void DriftParams::validate() const {
  if (!(loss_fraction >= 0.0 && loss_fraction <= 1.0)) {
    throw DomainError("drift: loss_fraction must be in [0, 1]");
  }
  if (!(sigma_mv >= 0.0) || !std::isfinite(sigma_mv)) {
    throw DomainError("drift: sigma_mv must be finite and >= 0");
  }
}

std::uint64_t DriftReport::total_cells() const noexcept {
  std::uint64_t n = 0;
  for (const auto& row : transitions)
    for (auto c : row) n += c;
  return n;
}

std::uint64_t DriftReport::misreads() const noexcept {
  std::uint64_t n = 0;
  for (int a = 0; a < kNumStates; ++a)
    for (int b = 0; b < kNumStates; ++b)
      if (a != b) n += transitions[a][b];
  return n;
}

std::uint64_t DriftReport::adjacent_misreads() const noexcept {
  std::uint64_t n = 0;
  for (int a = 0; a < kNumStates; ++a)
    for (int b = 0; b < kNumStates; ++b)
      if (std::abs(a - b) == 1) n += transitions[a][b];
  return n;
}

std::uint64_t DriftReport::far_misreads(const StateMap& map) const noexcept {
  std::uint64_t n = 0;
  for (int a = 0; a < kNumStates; ++a) {
    for (int b = 0; b < kNumStates; ++b) {
      const int dw = map.table()[a] - map.table()[b];
      if (std::abs(dw) >= 2) n += transitions[a][b];
    }
  }
  return n;
}

double DriftReport::misread_fraction() const noexcept {
  const auto total = total_cells();
  return total == 0 ? 0.0 : static_cast<double>(misreads()) / static_cast<double>(total);
}

std::uint64_t Histogram::total() const noexcept {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::size_t Histogram::clusters() const noexcept {
  std::size_t runs = 0;
  bool in_run = false;
  for (auto c : counts) {
    if (c != 0 && !in_run) ++runs;
    in_run = c != 0;
  }
  return runs;
}

EflashMacro::EflashMacro(MacroConfig config)
    : config_(std::move(config)), analog_(config_.pump, config_.driver) {
  config_.validate();
  vt_ticks_.assign(config_.geometry.total_cells(), 0);
  programmed_.assign(config_.geometry.total_rows(), 0);
  erase_all();
}

RowAddress EflashMacro::row_address(std::size_t linear_row) const {
  if (linear_row >= config_.geometry.total_rows()) {
    throw CapacityError("row " + std::to_string(linear_row) + " beyond macro capacity");
  }
  return {linear_row / config_.geometry.rows_per_bank,
          linear_row % config_.geometry.rows_per_bank};
}

std::size_t EflashMacro::cell_index(std::size_t bank, std::size_t row, std::size_t col) const {
  const auto& g = config_.geometry;
  if (bank >= g.banks) throw DomainError("unknown bank " + std::to_string(bank));
  if (row >= g.rows_per_bank) throw DomainError("row " + std::to_string(row) + " out of range");
  if (col >= kCellsPerRow) throw DomainError("column " + std::to_string(col) + " out of range");
  return (bank * g.rows_per_bank + row) * kCellsPerRow + col;
}

void EflashMacro::erase_bank(std::size_t bank, Exec exec) {
  if (bank >= config_.geometry.banks) throw DomainError("unknown bank " + std::to_string(bank));
  const std::uint64_t event = kEraseTag | erase_epoch_++;
  const std::size_t per_bank = config_.geometry.rows_per_bank * kCellsPerRow;
  const std::size_t begin = bank * per_bank;
  const auto& cm = config_.cells;
  const auto seed = config_.seed;
  for_cells(begin, begin + per_bank, exec, [&](std::size_t i) {
    StreamRng rng(seed, event, i);
    const double vt = std::max(0.0, normal_draw(rng, cm.erased_mean_mv, cm.erased_sigma_mv));
    vt_ticks_[i] = mv_to_ticks(vt);
  });
  const std::size_t row0 = bank * config_.geometry.rows_per_bank;
  std::fill_n(programmed_.begin() + static_cast<std::ptrdiff_t>(row0),
              config_.geometry.rows_per_bank, std::uint8_t{0});
}

void EflashMacro::erase_all(Exec exec) {
  for (std::size_t b = 0; b < config_.geometry.banks; ++b) erase_bank(b, exec);
}

double EflashMacro::program_pulse(std::size_t bank, std::size_t row, std::size_t col) {
  const std::size_t i = cell_index(bank, row, col);
  // Throws ProgramWhileUnregulated (a PumpNotReady) before the pump settles.
  const double vpgm = analog_.program_voltage();
  if (vpgm < config_.cells.vpgm_min_mv) {
    throw PumpNotReady("WL program voltage below vpgm_min");
  }
  StreamRng rng(config_.seed, kPulseTag | pulse_counter_++, i);
  const double step =
      std::max(0.0, normal_draw(rng, config_.cells.step_mean_mv, config_.cells.step_sigma_mv));
  const std::int64_t next = static_cast<std::int64_t>(vt_ticks_[i]) + mv_to_ticks(step);
  vt_ticks_[i] = static_cast<std::int32_t>(
      std::min<std::int64_t>(next, std::numeric_limits<std::int32_t>::max()));
  return ticks_to_mv(vt_ticks_[i]);
}

void EflashMacro::check_reachable(double vref_mv) const {
  if (!analog_.reachable(vref_mv)) {
    throw UnreachableReference(vref_mv, analog_.driver().reference_limit_mv());
  }
}

bool EflashMacro::sense(std::size_t bank, std::size_t row, std::size_t col,
                        double vref_mv) const {
  const std::size_t i = cell_index(bank, row, col);
  check_reachable(vref_mv);
  return ticks_to_mv(vt_ticks_[i]) > vref_mv;
}

RowStates EflashMacro::read_row(std::size_t bank, std::size_t row) {
  check_reachable(config_.codec.ladder().read_mv.back());
  RowStates states = peek_row(bank, row);
  ++read_events_;
  return states;
}

RowStates EflashMacro::peek_row(std::size_t bank, std::size_t row) const {
  const std::size_t base = cell_index(bank, row, 0);
  RowStates states{CellState(0)};
  for (std::size_t c = 0; c < kCellsPerRow; ++c) {
    states[c] = config_.codec.classify_vt(ticks_to_mv(vt_ticks_[base + c]));
  }
  return states;
}

DriftReport EflashMacro::apply_bake(const DriftParams& params, Exec exec) {
  params.validate();
  DriftReport report;
  report.params = params;
  const std::uint64_t event = kBakeTag | bake_epoch_++;
  const auto seed = config_.seed;
  const double erased = config_.cells.erased_mean_mv;
  const auto& codec = config_.codec;
  const auto n = static_cast<std::ptrdiff_t>(vt_ticks_.size());

  constexpr int kCells = kNumStates * kNumStates;
  std::array<std::uint64_t, kCells> flat{};
  std::uint64_t* counts = flat.data();

  auto body = [&](std::ptrdiff_t i, std::uint64_t* out) {
    const double vt = ticks_to_mv(vt_ticks_[i]);
    const int before = codec.classify_vt(vt).index();
    StreamRng rng(seed, event, static_cast<std::uint64_t>(i));
    const double noise = normal_draw(rng, 0.0, params.sigma_mv);
    const double next = vt - params.loss_fraction * (vt - erased) + noise;
    vt_ticks_[i] = mv_to_ticks(next);
    const int after = codec.classify_vt(ticks_to_mv(vt_ticks_[i])).index();
    ++out[before * kNumStates + after];
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) reduction(+ : counts[:kCells])
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i, counts);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i, counts);
  }

  for (int a = 0; a < kNumStates; ++a)
    for (int b = 0; b < kNumStates; ++b) report.transitions[a][b] = flat[a * kNumStates + b];
  return report;
}

Histogram EflashMacro::vt_histogram(const HistogramSelection& selection, double bin_mv,
                                    double range_mv) const {
  if (!(bin_mv > 0.0)) throw DomainError("histogram bin width must be positive");
  if (!(range_mv > 0.0)) throw DomainError("histogram range must be positive");
  const auto& g = config_.geometry;
  Histogram h;
  h.bin_mv = bin_mv;
  h.lo_mv = 0.0;
  h.counts.assign(static_cast<std::size_t>(std::ceil(range_mv / bin_mv)), 0);

  std::size_t bank_begin = 0;
  std::size_t bank_end = g.banks;
  if (selection.bank) {
    if (*selection.bank >= g.banks) throw DomainError("unknown bank " + std::to_string(*selection.bank));
    bank_begin = *selection.bank;
    bank_end = bank_begin + 1;
  }
  const std::size_t row_end = std::min(selection.row_end.value_or(g.rows_per_bank), g.rows_per_bank);
  const auto last = static_cast<std::ptrdiff_t>(h.counts.size()) - 1;

  for (std::size_t b = bank_begin; b < bank_end; ++b) {
    for (std::size_t r = selection.row_begin; r < row_end; ++r) {
      const std::size_t base = (b * g.rows_per_bank + r) * kCellsPerRow;
      for (std::size_t c = 0; c < kCellsPerRow; ++c) {
        const double vt = ticks_to_mv(vt_ticks_[base + c]);
        auto bin = static_cast<std::ptrdiff_t>(std::floor((vt - h.lo_mv) / bin_mv));
        bin = std::clamp<std::ptrdiff_t>(bin, 0, last);
        ++h.counts[static_cast<std::size_t>(bin)];
      }
    }
  }
  return h;
}

double EflashMacro::vt_mv(std::size_t bank, std::size_t row, std::size_t col) const {
  return ticks_to_mv(vt_ticks_[cell_index(bank, row, col)]);
}

void EflashMacro::set_vt_mv(std::size_t bank, std::size_t row, std::size_t col, double vt_mv) {
  vt_ticks_[cell_index(bank, row, col)] = mv_to_ticks(vt_mv);
}

bool EflashMacro::row_programmed(std::size_t bank, std::size_t row) const {
  cell_index(bank, row, 0);
  return programmed_[bank * config_.geometry.rows_per_bank + row] != 0;
}

void EflashMacro::mark_programmed(std::size_t bank, std::size_t row) {
  cell_index(bank, row, 0);
  programmed_[bank * config_.geometry.rows_per_bank + row] = 1;
}

EflashMacro::Counters EflashMacro::counters() const noexcept {
  return {erase_epoch_, bake_epoch_, pulse_counter_, read_events_};
}

void EflashMacro::restore(std::vector<std::int32_t> vt_ticks, std::vector<std::uint8_t> programmed,
                          const Counters& counters) {
  if (vt_ticks.size() != config_.geometry.total_cells() ||
      programmed.size() != config_.geometry.total_rows()) {
    throw ConfigError("macro state does not match the configured geometry");
  }
  vt_ticks_ = std::move(vt_ticks);
  programmed_ = std::move(programmed);
  erase_epoch_ = counters.erase_epoch;
  bake_epoch_ = counters.bake_epoch;
  pulse_counter_ = counters.pulse_counter;
  read_events_ = counters.read_events;
}

}  // namespace eflash
