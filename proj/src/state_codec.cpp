#include "eflash/state_codec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eflash/errors.hpp"

namespace eflash {

WeightNibble::WeightNibble(int value) : value_(0) {
  if (value < -8 || value > 7) {
    throw DomainError("weight " + std::to_string(value) + " outside [-8, 7]");
  }
  value_ = static_cast<std::int8_t>(value);
}

CellState::CellState(int index) : index_(0) {
  if (index < 0 || index >= kNumStates) {
    throw DomainError("cell state " + std::to_string(index) + " outside [0, 15]");
  }
  index_ = static_cast<std::uint8_t>(index);
}

ReferenceLadder ReferenceLadder::uniform_default() {
  return uniform(600.0, 2400.0, 50.0);
}

ReferenceLadder ReferenceLadder::uniform(double lowest_verify_mv,
                                         double highest_verify_mv,
                                         double read_offset_mv) {
  ReferenceLadder ladder;
  const double step =
      (highest_verify_mv - lowest_verify_mv) / (kNumProgrammedStates - 1);
  for (int k = 0; k < kNumProgrammedStates; ++k) {
    ladder.verify_mv[k] = lowest_verify_mv + step * k;
    ladder.read_mv[k] = ladder.verify_mv[k] - read_offset_mv;
  }
  // Pin the endpoint so it is not off by an ulp.
  ladder.verify_mv.back() = highest_verify_mv;
  ladder.read_mv.back() = highest_verify_mv - read_offset_mv;
  return ladder;
}

void ReferenceLadder::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("ladder: " + what); };
  for (int k = 0; k < kNumProgrammedStates; ++k) {
    const double v = verify_mv[k];
    const double r = read_mv[k];
    if (!std::isfinite(v) || !std::isfinite(r)) fail("non-finite level");
    if (v < 0.0 || v > kVddhMv || r < 0.0 || r > kVddhMv) {
      std::ostringstream os;
      os << "level for state " << k + 1 << " outside [0, " << kVddhMv << "] mV";
      fail(os.str());
    }
    if (!(r < v)) {
      fail("read boundary of state " + std::to_string(k + 1) +
           " is not below its verify level");
    }
    if (k > 0 && !(verify_mv[k - 1] < v)) fail("verify levels not strictly ascending");
    if (k > 0 && !(read_mv[k - 1] < r)) fail("read levels not strictly ascending");
    if (k > 0 && !(verify_mv[k - 1] < r)) {
      fail("verify level of state " + std::to_string(k) + " is not below the next read boundary");
    }
  }
}

StateMap::StateMap() {
  std::array<int, kNumStates> table{};
  for (int s = 0; s < kNumStates; ++s) table[s] = s - 8;
  *this = StateMap(table);
}

StateMap::StateMap(const std::array<int, kNumStates>& weight_of_state)
    : weight_of_state_(weight_of_state) {
  std::array<bool, kNumStates> seen{};
  for (int s = 0; s < kNumStates; ++s) {
    const int w = weight_of_state[s];
    if (w < -8 || w > 7 || seen[w + 8]) {
      throw ConfigError("state map is not a permutation of [-8, 7]");
    }
    seen[w + 8] = true;
    state_of_weight_[w + 8] = static_cast<std::uint8_t>(s);
  }
}

CellState StateMap::encode(WeightNibble w) const noexcept {
  return CellState(state_of_weight_[w.value() + 8]);
}

WeightNibble StateMap::decode(CellState s) const noexcept {
  return WeightNibble(weight_of_state_[s.index()]);
}

StateCodec::StateCodec() : StateCodec(StateMap{}, ReferenceLadder::uniform_default()) {}

StateCodec::StateCodec(StateMap map, ReferenceLadder ladder)
    : map_(std::move(map)), ladder_(ladder) {
  ladder_.validate();
}

double StateCodec::verify_level(CellState s) const {
  if (s.index() == 0) throw DomainError("erased state has no verify level");
  return ladder_.verify_mv[s.index() - 1];
}

double StateCodec::read_level(CellState s) const {
  if (s.index() == 0) throw DomainError("erased state has no read boundary");
  return ladder_.read_mv[s.index() - 1];
}

CellState StateCodec::classify_vt(double vt_mv) const noexcept {
  return eflash::classify_vt(vt_mv, ladder_);
}

CellState encode_weight(WeightNibble w) noexcept { return CellState(w.value() + 8); }

WeightNibble decode_state(CellState s) noexcept { return WeightNibble(s.index() - 8); }

CellState classify_vt(double vt_mv, const ReferenceLadder& ladder) noexcept {
  // read_mv is ascending, so the count of boundaries below vt is the index of
  // the first boundary >= vt.
  const auto it = std::lower_bound(ladder.read_mv.begin(), ladder.read_mv.end(), vt_mv);
  return CellState(static_cast<int>(it - ladder.read_mv.begin()));
}

}  // namespace eflash
