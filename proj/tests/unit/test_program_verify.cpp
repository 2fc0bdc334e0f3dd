#include <doctest.h>

#include <algorithm>

#include "eflash/errors.hpp"
#include "eflash/program_verify.hpp"
#include "support/oracle.hpp"
#include "test_support.hpp"

using namespace eflash;
using testing::noiseless;

namespace {

ProgramJob uniform_job(int state) {
  ProgramJob job;
  job.targets.fill(CellState(state));
  return job;
}

}  // namespace

TEST_CASE("all-erased targets issue no pulses") {
  EflashMacro m(testing::small_config());
  m.analog().power_up();
  std::vector<PulseEvent> trace;
  const auto rep = program_row(m, uniform_job(0), &trace);
  CHECK(trace.empty());
  CHECK(rep.total_pulses() == 0);
  CHECK(rep.states[0].cells == kCellsPerRow);
  CHECK(rep.states[0].mean_vt_mv() == doctest::Approx(400.0).epsilon(0.02));
}

TEST_CASE("strict verify: 100 mV steps from 400 mV need 3 pulses to pass 600 mV") {
  auto cfg = noiseless();
  cfg.cells.step_mean_mv = 100.0;
  EflashMacro m(cfg);
  m.analog().power_up();
  ProgramJob job;
  job.targets[0] = CellState(1);
  job.targets[1] = CellState(1);
  std::vector<PulseEvent> trace;
  const auto rep = program_row(m, job, &trace);
  CHECK(trace.size() == 6);
  CHECK(rep.pulses[1] == 6);
  CHECK(rep.max_pulses_one_cell == 3);
  CHECK(m.vt_mv(0, 0, 0) == 700.0);
}

TEST_CASE("states are programmed in ascending order") {
  EflashMacro m(testing::small_config());
  m.analog().power_up();
  ProgramJob job;
  for (std::size_t c = 0; c < kCellsPerRow; ++c) job.targets[c] = CellState(static_cast<int>(15 - c % 16));
  std::vector<PulseEvent> trace;
  program_row(m, job, &trace);
  CHECK(std::ranges::is_sorted(trace, {}, &PulseEvent::state));
  for (const auto& e : trace) REQUIRE(job.targets[e.col].index() == e.state);
}

TEST_CASE("conventional driver fails exactly the states above its limit") {
  const StateCodec codec;
  for (int s = 1; s < kNumStates; ++s) {
    auto cfg = noiseless(1, 1);
    cfg.driver.variant = DriverVariant::conventional;
    EflashMacro conv(cfg);
    conv.analog().power_up();
    const bool above = oracle::verify_mv(s) > 2500.0 - 700.0;
    if (above) {
      CHECK_THROWS_AS(program_row(conv, uniform_job(s)), UnreachableReference);
      CHECK(conv.pulses_issued() == 0);  // checked before any pulse
    } else {
      CHECK_NOTHROW(program_row(conv, uniform_job(s)));
    }

    cfg.driver.variant = DriverVariant::proposed;
    EflashMacro prop(cfg);
    prop.analog().power_up();
    CHECK_NOTHROW(program_row(prop, uniform_job(s)));
    const auto row = prop.read_row(0, 0);
    CHECK(std::all_of(row.begin(), row.end(), [s](CellState c) { return c.index() == s; }));
  }
  // With the default ladder that is states 11..15.
  int first_fail = 0;
  for (int s = 15; s >= 1; --s)
    if (codec.verify_level(CellState(s)) > 1800.0) first_fail = s;
  CHECK(first_fail == 11);
}

TEST_CASE("pulse budget exhaustion raises VerifyTimeout") {
  EflashMacro m(testing::small_config());
  m.analog().power_up();
  auto job = uniform_job(15);
  job.max_pulses_per_cell = 3;
  try {
    program_row(m, job);
    FAIL("expected VerifyTimeout");
  } catch (const VerifyTimeout& e) {
    CHECK(e.state() == 15);
    CHECK(e.row() == 0);
  }
  CHECK_FALSE(m.row_programmed(0, 0));
}

TEST_CASE("programming a non-erased row is rejected") {
  EflashMacro m(noiseless());
  m.analog().power_up();
  program_row(m, uniform_job(4));
  CHECK(m.row_programmed(0, 0));
  CHECK_THROWS_AS(program_row(m, uniform_job(4)), RowNotErased);
}

TEST_CASE("programming with the pump off is PumpNotReady") {
  EflashMacro m(noiseless());
  CHECK_THROWS_AS(program_row(m, uniform_job(2)), PumpNotReady);
  CHECK_THROWS_AS(program_row(m, uniform_job(2)), ProgramWhileUnregulated);
}

TEST_CASE("margin report bounds the programmed distributions") {
  EflashMacro m(testing::small_config(1, 4, 17));
  const auto w = testing::random_weights(4 * kCellsPerRow, 17);
  const auto sum = program_pattern(m, w);
  const auto& L = m.codec().ladder();
  for (int s = 1; s < kNumStates; ++s) {
    REQUIRE(sum.margins.states[s].cells > 0);
    CHECK(sum.margins.states[s].min_vt_mv > L.verify_mv[s - 1]);
    CHECK(*sum.margins.lower_margin_mv(s, L) > 0.0);
    if (s < 15) CHECK(*sum.margins.upper_margin_mv(s, L) > 0.0);
  }
  CHECK_FALSE(sum.margins.upper_margin_mv(15, L).has_value());
  CHECK_FALSE(sum.margins.lower_margin_mv(0, L).has_value());
}

TEST_CASE("program_pattern geometry") {
  EflashMacro m(noiseless(1, 8));
  const auto none = program_pattern(m, {});
  CHECK(none.rows == 0);
  CHECK(m.pulses_issued() == 0);

  const auto one = program_pattern(m, testing::random_weights(256, 1));
  CHECK(one.rows == 1);
  CHECK(one.padded_cells == 0);

  const auto w = testing::random_weights(300, 2);
  const auto two = program_pattern(m, w, 1);
  CHECK(two.rows == 2);
  CHECK(two.padded_cells == 212);
  const auto r1 = m.read_row(0, 1);
  const auto r2 = m.read_row(0, 2);
  for (std::size_t i = 0; i < 256; ++i) REQUIRE(oracle::weight_of_state(r1[i].index()) == w[i]);
  for (std::size_t i = 0; i < 44; ++i) REQUIRE(oracle::weight_of_state(r2[i].index()) == w[256 + i]);
  for (std::size_t i = 44; i < 256; ++i) REQUIRE(r2[i].index() == 0);
  CHECK_FALSE(m.analog().pump().enabled);

  CHECK_THROWS_AS(program_pattern(m, testing::random_weights(3 * 256, 3), 6), CapacityError);
}

TEST_CASE("zero-noise round trip of random rows") {
  EflashMacro m(noiseless(2, 32, 21));
  const auto w = testing::random_weights(64 * kCellsPerRow, 21);
  program_pattern(m, w);
  for (std::size_t r = 0; r < 64; ++r) {
    const auto a = m.row_address(r);
    const auto row = m.read_row(a.bank, a.row);
    for (std::size_t c = 0; c < kCellsPerRow; ++c)
      REQUIRE(oracle::weight_of_state(row[c].index()) == w[r * kCellsPerRow + c]);
  }
}

TEST_CASE("default-noise round trip still reads back exactly") {
  EflashMacro m(testing::small_config(2, 32, 22));
  const auto w = testing::random_weights(64 * kCellsPerRow, 22);
  program_pattern(m, w);
  for (std::size_t r = 0; r < 64; ++r) {
    const auto a = m.row_address(r);
    const auto row = m.read_row(a.bank, a.row);
    for (std::size_t c = 0; c < kCellsPerRow; ++c)
      REQUIRE(oracle::weight_of_state(row[c].index()) == w[r * kCellsPerRow + c]);
  }
}
