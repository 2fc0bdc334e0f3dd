#pragma once

#include <array>
#include <cstdint>

namespace eflash {

inline constexpr int kNumStates = 16;
inline constexpr int kNumProgrammedStates = 15;
inline constexpr double kVddhMv = 2500.0;

// Signed 4-bit weight in [-8, 7].
class WeightNibble {
 public:
  explicit WeightNibble(int value);
  int value() const noexcept { return value_; }
  friend bool operator==(WeightNibble, WeightNibble) = default;

 private:
  std::int8_t value_;
};

// Cell state index in [0, 15], ordered by ascending target VT. State 0 is the
// erased state.
class CellState {
 public:
  CellState() noexcept = default;  // erased
  explicit CellState(int index);
  int index() const noexcept { return index_; }
  friend bool operator==(CellState, CellState) = default;
  friend auto operator<=>(CellState, CellState) = default;

 private:
  std::uint8_t index_ = 0;
};

// Verify and read reference voltages for the 15 programmed states. Entry k
// (0-based) belongs to state k+1; read_mv[k] is the decision boundary just
// below that state.
struct ReferenceLadder {
  std::array<double, kNumProgrammedStates> verify_mv{};
  std::array<double, kNumProgrammedStates> read_mv{};

  // Uniform verify levels over [600, 2400] mV, read boundaries 50 mV below.
  static ReferenceLadder uniform_default();
  static ReferenceLadder uniform(double lowest_verify_mv,
                                 double highest_verify_mv,
                                 double read_offset_mv);

  // Throws ConfigError when ordering, margin or range constraints fail.
  void validate() const;
};

// Weight <-> state table. Default is the monotone map state = w + 8, which
// makes neighbouring states differ by exactly one weight step.
class StateMap {
 public:
  StateMap();
  // weight_of_state[s] is the weight stored by state s. Must be a permutation
  // of [-8, 7].
  explicit StateMap(const std::array<int, kNumStates>& weight_of_state);

  CellState encode(WeightNibble w) const noexcept;
  WeightNibble decode(CellState s) const noexcept;
  const std::array<int, kNumStates>& table() const noexcept { return weight_of_state_; }

 private:
  std::array<int, kNumStates> weight_of_state_{};
  std::array<std::uint8_t, kNumStates> state_of_weight_{};
};

// Immutable once built; safe to share between threads.
class StateCodec {
 public:
  StateCodec();
  StateCodec(StateMap map, ReferenceLadder ladder);

  CellState encode_weight(WeightNibble w) const noexcept { return map_.encode(w); }
  WeightNibble decode_state(CellState s) const noexcept { return map_.decode(s); }

  // Throws DomainError for the erased state.
  double verify_level(CellState s) const;
  double read_level(CellState s) const;

  // Number of read boundaries strictly below vt.
  CellState classify_vt(double vt_mv) const noexcept;

  const ReferenceLadder& ladder() const noexcept { return ladder_; }
  const StateMap& map() const noexcept { return map_; }

 private:
  StateMap map_;
  ReferenceLadder ladder_;
};

// Free-function forms with the default mapping.
CellState encode_weight(WeightNibble w) noexcept;
WeightNibble decode_state(CellState s) noexcept;
CellState classify_vt(double vt_mv, const ReferenceLadder& ladder) noexcept;

}  // namespace eflash
