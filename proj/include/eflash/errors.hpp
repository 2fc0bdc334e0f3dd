#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eflash {

// Root of every error raised by the simulator. Callers that only care about
// "something in the model went wrong" catch this; the CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class PumpNotReady : public Error {
 public:
  using Error::Error;
};

// Raised by the WL driver model when program mode is requested before the
// charge pump reports regulation.
class ProgramWhileUnregulated : public PumpNotReady {
 public:
  using PumpNotReady::PumpNotReady;
};

class UnreachableReference : public Error {
 public:
  UnreachableReference(double vref_mv, double limit_mv);

  double vref_mv() const noexcept { return vref_mv_; }
  double limit_mv() const noexcept { return limit_mv_; }

 private:
  double vref_mv_;
  double limit_mv_;
};

class VerifyTimeout : public Error {
 public:
  VerifyTimeout(std::size_t bank, std::size_t row, std::size_t col, int state,
                int pulses);

  std::size_t bank() const noexcept { return bank_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }
  int state() const noexcept { return state_; }

 private:
  std::size_t bank_;
  std::size_t row_;
  std::size_t col_;
  int state_;
};

class RowNotErased : public Error {
 public:
  using Error::Error;
};

class UnprogrammedRow : public Error {
 public:
  using Error::Error;
};

class AccumulatorOverflowRisk : public Error {
 public:
  using Error::Error;
};

class BufferError : public Error {
 public:
  using Error::Error;
};

}  // namespace eflash
