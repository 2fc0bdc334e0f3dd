#include "eflash/errors.hpp"

#include <sstream>

namespace eflash {

namespace {

std::string unreachable_message(double vref_mv, double limit_mv) {
  std::ostringstream os;
  os << "reference " << vref_mv << " mV is above the WL driver limit of "
     << limit_mv << " mV";
  return os.str();
}

std::string timeout_message(std::size_t bank, std::size_t row, std::size_t col,
                            int state, int pulses) {
  std::ostringstream os;
  os << "verify timeout at bank " << bank << " row " << row << " col " << col
     << " (target state " << state << ", " << pulses << " pulses)";
  return os.str();
}

}  // namespace

UnreachableReference::UnreachableReference(double vref_mv, double limit_mv)
    : Error(unreachable_message(vref_mv, limit_mv)),
      vref_mv_(vref_mv),
      limit_mv_(limit_mv) {}

VerifyTimeout::VerifyTimeout(std::size_t bank, std::size_t row,
                             std::size_t col, int state, int pulses)
    : Error(timeout_message(bank, row, col, state, pulses)),
      bank_(bank),
      row_(row),
      col_(col),
      state_(state) {}

}  // namespace eflash
