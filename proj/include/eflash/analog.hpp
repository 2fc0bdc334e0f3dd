#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "eflash/state_codec.hpp"

namespace eflash {

// Behavioral HV generator: four boosted taps (VPP1..VPP4) and the supply
// switches (VPS1..VPS4) that hand them to the program/erase rails.
struct PumpParams {
  double vddh_mv = kVddhMv;
  double vpp4_target_mv = 10000.0;
  double tau_steps = 20.0;
  // VPS switches to the boosted taps once VPP1 exceeds this level.
  double sref_mv = 2000.0;
  // Fraction of the VPP4 target at which the regulation flag is raised.
  double regulation_fraction = 0.98;

  void validate() const;
  // Tap n (1-based) targets vddh + n * (vpp4_target - vddh) / 4.
  std::array<double, 4> tap_targets() const;
};

struct PumpState {
  std::array<double, 4> vpp_mv{};
  std::array<double, 4> vps_mv{kVddhMv, kVddhMv, kVddhMv, kVddhMv};
  bool enabled = false;
  bool regulated = false;
};

// One simulation step: taps relax exponentially toward their targets while
// enabled and toward ground while disabled.
PumpState pump_step(const PumpState& state, const PumpParams& params);

// Largest of |VPP[n+1]-VPP[n]|, |VPP1-VDDH| and |VPS[n]-VPP[n]| over the taps.
double max_device_stress_mv(const PumpState& state, const PumpParams& params);

struct PumpTraceRow {
  std::size_t step;
  PumpState state;
};

// Runs `enable_steps` enabled steps followed by `disable_steps` disabled
// steps from a discharged pump, recording the initial state and every step.
std::vector<PumpTraceRow> pump_cycle(const PumpParams& params, std::size_t enable_steps,
                                     std::size_t disable_steps);

enum class DriverVariant { proposed, conventional };
enum class WlMode { program, verify, read };

struct WlDriverConfig {
  DriverVariant variant = DriverVariant::proposed;
  double vth_drop_mv = 700.0;
  double vpgm_mv = 10000.0;
  double vddh_mv = kVddhMv;

  void validate() const;
  // Highest verify/read level the driver can put on the WL.
  double reference_limit_mv() const noexcept;
};

// WL voltage for the given mode. Program mode needs a regulated pump and
// throws ProgramWhileUnregulated otherwise; `vrd_mv` is ignored there.
double wl_voltage(const WlDriverConfig& cfg, WlMode mode, double vrd_mv,
                  const PumpState& pump);
// Verify/read form; does not consult the pump.
double wl_voltage(const WlDriverConfig& cfg, WlMode mode, double vrd_mv);

bool reference_reachable(const WlDriverConfig& cfg, double vref_mv) noexcept;

// Pump plus WL driver as seen by one macro.
class AnalogEnv {
 public:
  AnalogEnv() = default;
  AnalogEnv(PumpParams pump, WlDriverConfig driver);

  const PumpParams& pump_params() const noexcept { return pump_params_; }
  const PumpState& pump() const noexcept { return pump_; }
  const WlDriverConfig& driver() const noexcept { return driver_; }

  void set_enabled(bool on) noexcept { pump_.enabled = on; }
  void step() { pump_ = pump_step(pump_, pump_params_); }
  // Enables the pump and steps until it regulates. Throws PumpNotReady if it
  // does not within `max_steps`.
  std::size_t power_up(std::size_t max_steps = 10000);
  // Disables and steps until the taps are discharged below VDDH/100.
  std::size_t power_down(std::size_t max_steps = 10000);

  double program_voltage() const { return wl_voltage(driver_, WlMode::program, 0.0, pump_); }
  bool reachable(double vref_mv) const noexcept { return reference_reachable(driver_, vref_mv); }

 private:
  PumpParams pump_params_{};
  WlDriverConfig driver_{};
  PumpState pump_{};
};

}  // namespace eflash
