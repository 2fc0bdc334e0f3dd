#include "eflash/report_io.hpp"

#include <array>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "eflash/errors.hpp"

namespace eflash {

using nlohmann::json;

namespace {

constexpr const char* kStateFormat = "eflash-macro-state";
constexpr int kStateVersion = 1;

json placement_json(const std::vector<LayerPlacementInfo>& layers) {
  json arr = json::array();
  for (const auto& l : layers) {
    json j{{"layer", l.layer}, {"rows", l.rows}};
    j["base_row"] = l.base_row ? json(*l.base_row) : json(nullptr);
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

json to_json(const MarginReport& report, const ReferenceLadder& ladder) {
  json states = json::array();
  for (int s = 0; s < kNumStates; ++s) {
    const auto& st = report.states[s];
    json j{{"state", s}, {"cells", st.cells}, {"pulses", report.pulses[s]}};
    if (st.cells) {
      j["min_vt_mv"] = st.min_vt_mv;
      j["max_vt_mv"] = st.max_vt_mv;
      j["mean_vt_mv"] = st.mean_vt_mv();
    }
    if (auto m = report.lower_margin_mv(s, ladder)) j["lower_margin_mv"] = *m;
    if (auto m = report.upper_margin_mv(s, ladder)) j["upper_margin_mv"] = *m;
    states.push_back(std::move(j));
  }
  return {{"states", states},
          {"total_pulses", report.total_pulses()},
          {"max_pulses_one_cell", report.max_pulses_one_cell}};
}

json to_json(const DriftReport& report, const StateMap& map) {
  json matrix = json::array();
  for (const auto& row : report.transitions) matrix.push_back(row);
  json per_state = json::array();
  for (int s = 0; s < kNumStates; ++s) {
    std::uint64_t total = 0;
    for (auto c : report.transitions[s]) total += c;
    per_state.push_back({{"state", s}, {"cells", total}, {"misread", total - report.transitions[s][s]}});
  }
  return {{"params",
           {{"loss_fraction", report.params.loss_fraction},
            {"sigma_mv", report.params.sigma_mv},
            {"hours", report.params.hours},
            {"temp_c", report.params.temp_c}}},
          {"total_cells", report.total_cells()},
          {"misreads", report.misreads()},
          {"adjacent_misreads", report.adjacent_misreads()},
          {"far_misreads", report.far_misreads(map)},
          {"misread_fraction", report.misread_fraction()},
          {"per_state", per_state},
          {"transitions", matrix}};
}

json to_json(const DeployReport& report) {
  return {{"rows_used", report.rows_used}, {"layers", placement_json(report.layers)}};
}

json to_json(const EvalResult& r) {
  json j{{"task", to_string(r.task)}, {"samples", r.samples}, {"macro_reads", r.macro_reads}};
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  if (r.auc) j["auc"] = *r.auc;
  if (!r.per_class_total.empty()) {
    j["per_class_total"] = r.per_class_total;
    j["per_class_correct"] = r.per_class_correct;
  }
  return j;
}

json to_json(const NmcuTrace& trace) {
  json fetches = json::array();
  for (const auto& f : trace.fetches) {
    fetches.push_back({{"layer", f.layer}, {"source", to_string(f.source)}, {"offset", f.offset}});
  }
  json layers = json::array();
  for (const auto& l : trace.layers) {
    layers.push_back({{"layer", l.layer},
                      {"source", to_string(l.source)},
                      {"macro_reads", l.macro_reads},
                      {"pe_ops", l.pe_ops}});
  }
  return {{"input_loads", trace.input_loads},
          {"input_buffer_episodes", trace.input_buffer_episodes()},
          {"layers", layers},
          {"fetches", fetches}};
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left_mv,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) out << h.bin_left_mv(i) << ',' << h.counts[i] << '\n';
}

void write_pump_csv(std::ostream& out, const std::vector<PumpTraceRow>& trace) {
  out << "step,vpp1,vpp2,vpp3,vpp4,vps1,vps2,vps3,vps4\n";
  for (const auto& row : trace) {
    out << row.step;
    for (double v : row.state.vpp_mv) out << ',' << v;
    for (double v : row.state.vps_mv) out << ',' << v;
    out << '\n';
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& state_path) {
  auto p = state_path;
  p += ".json";
  return p;
}

void save_macro_state(const std::filesystem::path& path, const EflashMacro& macro,
                      const std::optional<DeployReport>& placement) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw Error(path.string() + ": cannot write macro state");
  for (std::int32_t t : macro.vt_ticks()) {
    const auto u = static_cast<std::uint32_t>(t);
    const std::array<char, 4> b{static_cast<char>(u), static_cast<char>(u >> 8),
                                static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
    bin.write(b.data(), 4);
  }

  const auto& g = macro.geometry();
  const auto c = macro.counters();
  json rows = json::array();
  const auto flags = macro.programmed_flags();
  for (std::size_t r = 0; r < flags.size(); ++r)
    if (flags[r]) rows.push_back(r);
  json side{{"format", kStateFormat},
            {"version", kStateVersion},
            {"vt_encoding", "int32-le, millivolts*16"},
            {"geometry", {{"banks", g.banks}, {"rows_per_bank", g.rows_per_bank}, {"cells_per_row", kCellsPerRow}}},
            {"seed", macro.config().seed},
            {"counters",
             {{"erase_epoch", c.erase_epoch},
              {"bake_epoch", c.bake_epoch},
              {"pulse_counter", c.pulse_counter},
              {"read_events", c.read_events}}},
            {"programmed_rows", rows}};
  if (placement) side["placement"] = placement_json(placement->layers);
  std::ofstream js(sidecar_path(path));
  if (!js) throw Error(sidecar_path(path).string() + ": cannot write sidecar");
  js << side.dump(2) << '\n';
}

LoadedState load_macro_state(const std::filesystem::path& path, const SimConfig& config) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw DatasetError(sidecar_path(path).string() + ": cannot open state sidecar");
  json side;
  try {
    js >> side;
  } catch (const json::exception& e) {
    throw DatasetError(sidecar_path(path).string() + ": " + e.what());
  }
  if (side.value("format", "") != kStateFormat || side.value("version", 0) != kStateVersion) {
    throw DatasetError(sidecar_path(path).string() + ": not an eflash macro state");
  }

  MacroConfig mc = config.macro;
  try {
    mc.geometry.banks = side.at("geometry").at("banks").get<std::size_t>();
    mc.geometry.rows_per_bank = side.at("geometry").at("rows_per_bank").get<std::size_t>();
    mc.seed = side.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DatasetError(sidecar_path(path).string() + ": " + e.what());
  }

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw DatasetError(path.string() + ": cannot open macro state");
  std::vector<std::int32_t> ticks(mc.geometry.total_cells());
  for (auto& t : ticks) {
    std::array<unsigned char, 4> b{};
    if (!bin.read(reinterpret_cast<char*>(b.data()), 4)) throw DatasetError(path.string() + ": truncated");
    const std::uint32_t u = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                            (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
    t = static_cast<std::int32_t>(u);
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw DatasetError(path.string() + ": trailing data");

  std::vector<std::uint8_t> programmed(mc.geometry.total_rows(), 0);
  EflashMacro::Counters counters;
  std::optional<std::vector<LayerPlacementInfo>> placement;
  try {
    for (const auto& r : side.at("programmed_rows")) {
      const auto row = r.get<std::size_t>();
      if (row >= programmed.size()) throw DatasetError("programmed row out of range");
      programmed[row] = 1;
    }
    const auto& c = side.at("counters");
    counters.erase_epoch = c.at("erase_epoch").get<std::uint64_t>();
    counters.bake_epoch = c.at("bake_epoch").get<std::uint64_t>();
    counters.pulse_counter = c.at("pulse_counter").get<std::uint64_t>();
    counters.read_events = c.at("read_events").get<std::uint64_t>();
    if (auto it = side.find("placement"); it != side.end()) {
      std::vector<LayerPlacementInfo> layers;
      for (const auto& l : *it) {
        LayerPlacementInfo info;
        info.layer = l.at("layer").get<std::size_t>();
        info.rows = l.at("rows").get<std::size_t>();
        if (!l.at("base_row").is_null()) info.base_row = l.at("base_row").get<std::size_t>();
        layers.push_back(info);
      }
      placement = std::move(layers);
    }
  } catch (const json::exception& e) {
    throw DatasetError(sidecar_path(path).string() + ": " + e.what());
  }

  EflashMacro macro(mc);
  macro.restore(std::move(ticks), std::move(programmed), counters);
  return {std::move(macro), std::move(placement)};
}

}  // namespace eflash
