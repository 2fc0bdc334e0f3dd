#include "eflash/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "eflash/errors.hpp"

namespace eflash {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

const json* section(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) return nullptr;
  if (!it->is_object()) throw ConfigError(std::string(key) + ": expected an object");
  return &*it;
}

std::array<double, kNumProgrammedStates> levels(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != kNumProgrammedStates) {
    throw ConfigError(path + ": expected 15 levels");
  }
  std::array<double, kNumProgrammedStates> out{};
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!v[k].is_number()) throw ConfigError(path + "[" + std::to_string(k) + "]: expected a number");
    out[k] = v[k].get<double>();
  }
  return out;
}

ReferenceLadder parse_ladder(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "uniform-default") return ReferenceLadder::uniform_default();
    throw ConfigError("ladder: unknown preset \"" + v.get<std::string>() + "\"");
  }
  if (!v.is_object()) throw ConfigError("ladder: expected a preset name or an object");
  if (auto it = v.find("uniform"); it != v.end()) {
    double lo = 600.0, hi = 2400.0, offset = 50.0;
    read_opt(*it, "lowest_verify_mv", lo, "ladder.uniform");
    read_opt(*it, "highest_verify_mv", hi, "ladder.uniform");
    read_opt(*it, "read_offset_mv", offset, "ladder.uniform");
    return ReferenceLadder::uniform(lo, hi, offset);
  }
  ReferenceLadder ladder;
  auto verify = v.find("verify_mv");
  auto read = v.find("read_mv");
  if (verify == v.end() || read == v.end()) throw ConfigError("ladder: needs verify_mv and read_mv");
  ladder.verify_mv = levels(*verify, "ladder.verify_mv");
  ladder.read_mv = levels(*read, "ladder.read_mv");
  return ladder;
}

}  // namespace

void SimConfig::validate() const {
  macro.validate();
  if (max_pulses_per_cell < 1) throw ConfigError("program.max_pulses_per_cell must be >= 1");
  if (nmcu.ping_pong_capacity == 0 || nmcu.input_capacity == 0) {
    throw ConfigError("nmcu buffer capacities must be >= 1");
  }
}

SimConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  SimConfig cfg;
  auto& m = cfg.macro;

  if (const json* g = section(doc, "geometry")) {
    read_opt(*g, "banks", m.geometry.banks, "geometry");
    read_opt(*g, "rows_per_bank", m.geometry.rows_per_bank, "geometry");
    read_opt(*g, "max_cells", m.geometry.max_cells, "geometry");
    if (auto it = g->find("cells_per_row"); it != g->end() && *it != kCellsPerRow) {
      throw ConfigError("geometry.cells_per_row: fixed at 256");
    }
  }
  if (const json* c = section(doc, "cells")) {
    read_opt(*c, "erased_mean_mv", m.cells.erased_mean_mv, "cells");
    read_opt(*c, "erased_sigma_mv", m.cells.erased_sigma_mv, "cells");
    read_opt(*c, "step_mean_mv", m.cells.step_mean_mv, "cells");
    read_opt(*c, "step_sigma_mv", m.cells.step_sigma_mv, "cells");
    read_opt(*c, "vpgm_min_mv", m.cells.vpgm_min_mv, "cells");
  }

  ReferenceLadder ladder = ReferenceLadder::uniform_default();
  if (auto it = doc.find("ladder"); it != doc.end()) ladder = parse_ladder(*it);
  StateMap map;
  if (auto it = doc.find("state_map"); it != doc.end()) {
    if (!it->is_array() || it->size() != kNumStates) throw ConfigError("state_map: expected 16 weights");
    std::array<int, kNumStates> table{};
    for (std::size_t s = 0; s < table.size(); ++s) {
      if (!(*it)[s].is_number_integer()) throw ConfigError("state_map: expected integers");
      table[s] = (*it)[s].get<int>();
    }
    map = StateMap(table);
  }
  m.codec = StateCodec(map, ladder);

  if (const json* d = section(doc, "driver")) {
    if (auto it = d->find("variant"); it != d->end()) {
      const auto v = it->is_string() ? it->get<std::string>() : std::string{};
      if (v == "proposed") {
        m.driver.variant = DriverVariant::proposed;
      } else if (v == "conventional") {
        m.driver.variant = DriverVariant::conventional;
      } else {
        throw ConfigError("driver.variant: expected \"proposed\" or \"conventional\"");
      }
    }
    read_opt(*d, "vth_drop_mv", m.driver.vth_drop_mv, "driver");
    read_opt(*d, "vpgm_mv", m.driver.vpgm_mv, "driver");
  }
  if (const json* p = section(doc, "pump")) {
    read_opt(*p, "vpp4_target_mv", m.pump.vpp4_target_mv, "pump");
    read_opt(*p, "tau_steps", m.pump.tau_steps, "pump");
    read_opt(*p, "sref_mv", m.pump.sref_mv, "pump");
    read_opt(*p, "regulation_fraction", m.pump.regulation_fraction, "pump");
  }
  if (const json* p = section(doc, "program")) {
    read_opt(*p, "max_pulses_per_cell", cfg.max_pulses_per_cell, "program");
  }
  if (const json* n = section(doc, "nmcu")) {
    read_opt(*n, "ping_pong_capacity", cfg.nmcu.ping_pong_capacity, "nmcu");
    read_opt(*n, "input_capacity", cfg.nmcu.input_capacity, "nmcu");
  }
  read_opt(doc, "seed", m.seed, "config");
  cfg.validate();
  return cfg;
}

json config_to_json(const SimConfig& cfg) {
  const auto& m = cfg.macro;
  json doc;
  doc["geometry"] = {{"banks", m.geometry.banks},
                     {"rows_per_bank", m.geometry.rows_per_bank},
                     {"cells_per_row", kCellsPerRow},
                     {"max_cells", m.geometry.max_cells}};
  doc["cells"] = {{"erased_mean_mv", m.cells.erased_mean_mv},
                  {"erased_sigma_mv", m.cells.erased_sigma_mv},
                  {"step_mean_mv", m.cells.step_mean_mv},
                  {"step_sigma_mv", m.cells.step_sigma_mv},
                  {"vpgm_min_mv", m.cells.vpgm_min_mv}};
  doc["ladder"] = {{"verify_mv", m.codec.ladder().verify_mv}, {"read_mv", m.codec.ladder().read_mv}};
  doc["state_map"] = m.codec.map().table();
  doc["driver"] = {{"variant", m.driver.variant == DriverVariant::proposed ? "proposed" : "conventional"},
                   {"vth_drop_mv", m.driver.vth_drop_mv},
                   {"vpgm_mv", m.driver.vpgm_mv}};
  doc["pump"] = {{"vpp4_target_mv", m.pump.vpp4_target_mv},
                 {"tau_steps", m.pump.tau_steps},
                 {"sref_mv", m.pump.sref_mv},
                 {"regulation_fraction", m.pump.regulation_fraction}};
  doc["program"] = {{"max_pulses_per_cell", cfg.max_pulses_per_cell}};
  doc["nmcu"] = {{"ping_pong_capacity", cfg.nmcu.ping_pong_capacity},
                 {"input_capacity", cfg.nmcu.input_capacity}};
  doc["seed"] = m.seed;
  return doc;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

}  // namespace eflash
