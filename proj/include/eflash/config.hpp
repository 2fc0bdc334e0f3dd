#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "eflash/cell_array.hpp"
#include "eflash/nmcu.hpp"

namespace eflash {

// Everything a simulation run needs besides its inputs. Loaded from JSON;
// omitted fields keep their defaults.
struct SimConfig {
  MacroConfig macro{};
  int max_pulses_per_cell = 64;
  NmcuConfig nmcu{};

  void validate() const;
};

SimConfig parse_config(const nlohmann::json& doc);
nlohmann::json config_to_json(const SimConfig& config);
// Throws ConfigError for unreadable or invalid files.
SimConfig load_config(const std::filesystem::path& path);

}  // namespace eflash
