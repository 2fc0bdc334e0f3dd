#include "eflash/analog.hpp"

#include <algorithm>
#include <cmath>

#include "eflash/errors.hpp"

namespace eflash {

void PumpParams::validate() const {
  if (!(vddh_mv > 0.0)) throw ConfigError("pump: vddh_mv must be positive");
  if (!(vpp4_target_mv > vddh_mv)) throw ConfigError("pump: vpp4 target must exceed vddh");
  if (!(tau_steps > 0.0)) throw ConfigError("pump: tau_steps must be positive");
  if (!(sref_mv > 0.0)) throw ConfigError("pump: sref_mv must be positive");
  if (!(regulation_fraction > 0.0 && regulation_fraction <= 1.0)) {
    throw ConfigError("pump: regulation_fraction must be in (0, 1]");
  }
}

std::array<double, 4> PumpParams::tap_targets() const {
  const double spacing = (vpp4_target_mv - vddh_mv) / 4.0;
  return {vddh_mv + spacing, vddh_mv + 2.0 * spacing, vddh_mv + 3.0 * spacing,
          vpp4_target_mv};
}

PumpState pump_step(const PumpState& state, const PumpParams& params) {
  PumpState next = state;
  const double alpha = 1.0 - std::exp(-1.0 / params.tau_steps);
  const auto targets = params.tap_targets();
  for (std::size_t n = 0; n < 4; ++n) {
    const double goal = state.enabled ? targets[n] : 0.0;
    next.vpp_mv[n] = state.vpp_mv[n] + alpha * (goal - state.vpp_mv[n]);
  }

  if (state.enabled) {
    // Sticky once raised; cleared only by disabling the pump.
    next.regulated =
        state.regulated || next.vpp_mv[3] >= params.regulation_fraction * params.vpp4_target_mv;
  } else {
    next.regulated = false;
  }

  const bool boosted = next.vpp_mv[0] > params.sref_mv;
  for (std::size_t n = 0; n < 4; ++n) {
    next.vps_mv[n] = boosted ? next.vpp_mv[n] : params.vddh_mv;
  }
  return next;
}

double max_device_stress_mv(const PumpState& state, const PumpParams& params) {
  double worst = std::abs(state.vpp_mv[0] - params.vddh_mv);
  for (std::size_t n = 0; n + 1 < 4; ++n) {
    worst = std::max(worst, std::abs(state.vpp_mv[n + 1] - state.vpp_mv[n]));
  }
  for (std::size_t n = 0; n < 4; ++n) {
    worst = std::max(worst, std::abs(state.vps_mv[n] - state.vpp_mv[n]));
  }
  return worst;
}

std::vector<PumpTraceRow> pump_cycle(const PumpParams& params, std::size_t enable_steps,
                                     std::size_t disable_steps) {
  params.validate();
  std::vector<PumpTraceRow> trace;
  trace.reserve(enable_steps + disable_steps + 1);
  PumpState state;
  for (auto& v : state.vps_mv) v = params.vddh_mv;
  trace.push_back({0, state});
  state.enabled = true;
  for (std::size_t i = 0; i < enable_steps; ++i) {
    state = pump_step(state, params);
    trace.push_back({trace.size(), state});
  }
  state.enabled = false;
  for (std::size_t i = 0; i < disable_steps; ++i) {
    state = pump_step(state, params);
    trace.push_back({trace.size(), state});
  }
  return trace;
}

void WlDriverConfig::validate() const {
  if (!(vth_drop_mv > 0.0 && vth_drop_mv < vddh_mv)) {
    throw ConfigError("driver: vth_drop_mv must be in (0, vddh)");
  }
  if (!(vpgm_mv > vddh_mv)) throw ConfigError("driver: vpgm_mv must exceed vddh");
}

double WlDriverConfig::reference_limit_mv() const noexcept {
  return variant == DriverVariant::proposed ? vddh_mv : vddh_mv - vth_drop_mv;
}

double wl_voltage(const WlDriverConfig& cfg, WlMode mode, double vrd_mv,
                  const PumpState& pump) {
  if (mode == WlMode::program) {
    if (!pump.regulated) {
      throw ProgramWhileUnregulated("WL program mode requested before pump regulation");
    }
    return cfg.vpgm_mv;
  }
  return wl_voltage(cfg, mode, vrd_mv);
}

double wl_voltage(const WlDriverConfig& cfg, WlMode mode, double vrd_mv) {
  if (mode == WlMode::program) {
    throw ProgramWhileUnregulated("WL program mode needs the pump state");
  }
  if (vrd_mv < 0.0 || vrd_mv > cfg.vddh_mv) {
    throw DomainError("VRD outside [0, VDDH]");
  }
  // The PMOS charging path passes VRD unchanged; the NMOS-only path loses a
  // threshold drop at the top of the range.
  return std::min(vrd_mv, cfg.reference_limit_mv());
}

bool reference_reachable(const WlDriverConfig& cfg, double vref_mv) noexcept {
  if (vref_mv < 0.0 || vref_mv > cfg.vddh_mv) return false;
  return std::min(vref_mv, cfg.reference_limit_mv()) >= vref_mv;
}

AnalogEnv::AnalogEnv(PumpParams pump, WlDriverConfig driver)
    : pump_params_(pump), driver_(driver) {
  pump_params_.validate();
  driver_.validate();
  for (auto& v : pump_.vps_mv) v = pump_params_.vddh_mv;
}

std::size_t AnalogEnv::power_up(std::size_t max_steps) {
  pump_.enabled = true;
  std::size_t steps = 0;
  while (!pump_.regulated) {
    if (steps == max_steps) throw PumpNotReady("pump failed to regulate");
    step();
    ++steps;
  }
  return steps;
}

std::size_t AnalogEnv::power_down(std::size_t max_steps) {
  pump_.enabled = false;
  std::size_t steps = 0;
  do {
    step();
    ++steps;
  } while (pump_.vpp_mv[3] > pump_params_.vddh_mv / 100.0 && steps < max_steps);
  return steps;
}

}  // namespace eflash
