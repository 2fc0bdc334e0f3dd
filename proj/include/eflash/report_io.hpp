#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eflash/analog.hpp"
#include "eflash/cell_array.hpp"
#include "eflash/config.hpp"
#include "eflash/inference.hpp"
#include "eflash/program_verify.hpp"

namespace eflash {

nlohmann::json to_json(const MarginReport& report, const ReferenceLadder& ladder);
nlohmann::json to_json(const DriftReport& report, const StateMap& map);
nlohmann::json to_json(const DeployReport& report);
nlohmann::json to_json(const EvalResult& result);
nlohmann::json to_json(const NmcuTrace& trace);

// `bin_left_mv,count`
void write_histogram_csv(std::ostream& out, const Histogram& h);
// `step,vpp1,vpp2,vpp3,vpp4,vps1,vps2,vps3,vps4`
void write_pump_csv(std::ostream& out, const std::vector<PumpTraceRow>& trace);

// Macro state: `path` holds the VT of every cell as little-endian int32 in
// 1/16 mV; `path` + ".json" holds geometry, seed, counters, programmed rows
// and an optional deployment placement.
void save_macro_state(const std::filesystem::path& path, const EflashMacro& macro,
                      const std::optional<DeployReport>& placement = std::nullopt);

struct LoadedState {
  EflashMacro macro;
  std::optional<std::vector<LayerPlacementInfo>> placement;
};

// Geometry and seed come from the sidecar; everything else from `config`.
LoadedState load_macro_state(const std::filesystem::path& path, const SimConfig& config);

std::filesystem::path sidecar_path(const std::filesystem::path& state_path);

}  // namespace eflash
