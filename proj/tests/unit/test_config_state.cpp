#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "eflash/config.hpp"
#include "eflash/errors.hpp"
#include "eflash/inference.hpp"
#include "eflash/report_io.hpp"
#include "test_support.hpp"

using namespace eflash;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& stem) {
  return fs::temp_directory_path() / ("eflash-" + stem + "-" + std::to_string(std::random_device{}()));
}

}  // namespace

TEST_CASE("empty config gives defaults") {
  const auto cfg = parse_config(json::object());
  CHECK(cfg.macro.geometry.banks == 4);
  CHECK(cfg.macro.geometry.rows_per_bank == 64);
  CHECK(cfg.macro.codec.ladder().verify_mv == ReferenceLadder::uniform_default().verify_mv);
  CHECK(cfg.macro.driver.variant == DriverVariant::proposed);
  CHECK(cfg.max_pulses_per_cell == 64);
}

TEST_CASE("config round trip through JSON") {
  json doc = {{"geometry", {{"banks", 2}, {"rows_per_bank", 16}}},
              {"cells", {{"erased_sigma_mv", 0.0}, {"step_mean_mv", 35.0}}},
              {"ladder", {{"uniform", {{"lowest_verify_mv", 700.0}, {"highest_verify_mv", 2300.0}, {"read_offset_mv", 40.0}}}}},
              {"driver", {{"variant", "conventional"}, {"vth_drop_mv", 600.0}}},
              {"program", {{"max_pulses_per_cell", 80}}},
              {"seed", 77}};
  const auto cfg = parse_config(doc);
  CHECK(cfg.macro.geometry.banks == 2);
  CHECK(cfg.macro.cells.step_mean_mv == 35.0);
  CHECK(cfg.macro.codec.ladder().verify_mv[0] == 700.0);
  CHECK(cfg.macro.codec.ladder().read_mv[14] == 2260.0);
  CHECK(cfg.macro.driver.variant == DriverVariant::conventional);
  CHECK(cfg.macro.seed == 77);
  CHECK(cfg.max_pulses_per_cell == 80);
  const auto again = parse_config(config_to_json(cfg));
  CHECK(config_to_json(again) == config_to_json(cfg));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
  CHECK_THROWS_AS(parse_config({{"geometry", {{"banks", "four"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"geometry", {{"banks", 0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"driver", {{"variant", "magic"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"ladder", "steep"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"ladder", {{"verify_mv", {1, 2, 3}}, {"read_mv", {0, 1, 2}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"cells", {{"erased_sigma_mv", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"state_map", {1, 2}}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("macro state save/load is lossless") {
  SimConfig cfg;
  cfg.macro = testing::small_config(2, 8, 31);
  EflashMacro m(cfg.macro);
  program_pattern(m, testing::random_weights(5 * kCellsPerRow, 31), 3);
  DriftParams p;
  p.sigma_mv = 5.0;
  m.apply_bake(p);

  const auto path = temp_file("state");
  save_macro_state(path, m);
  CHECK(fs::file_size(path) == m.geometry().total_cells() * 4);
  auto loaded = load_macro_state(path, cfg);
  CHECK(std::ranges::equal(loaded.macro.vt_ticks(), m.vt_ticks()));
  CHECK(std::ranges::equal(loaded.macro.programmed_flags(), m.programmed_flags()));
  CHECK(loaded.macro.counters().bake_epoch == m.counters().bake_epoch);
  CHECK(loaded.macro.counters().pulse_counter == m.counters().pulse_counter);
  CHECK_FALSE(loaded.placement.has_value());

  // Same continuation after reload: a second bake lands identically.
  EflashMacro a = m;
  a.apply_bake(p);
  loaded.macro.apply_bake(p);
  CHECK(std::ranges::equal(a.vt_ticks(), loaded.macro.vt_ticks()));

  fs::remove(path);
  fs::remove(sidecar_path(path));
}

TEST_CASE("macro state keeps the deployment placement") {
  SimConfig cfg;
  cfg.macro = testing::small_config(1, 16, 32);
  QuantModel model = make_synthetic_autoencoder(SyntheticAnomalyParams{});
  EflashMacro m(cfg.macro);
  const auto rep = deploy(model, m, 2);
  const auto path = temp_file("placed");
  save_macro_state(path, m, rep);
  auto loaded = load_macro_state(path, cfg);
  REQUIRE(loaded.placement.has_value());
  QuantModel fresh = make_synthetic_autoencoder(SyntheticAnomalyParams{});
  apply_placement(fresh, *loaded.placement);
  CHECK(fresh.deployed);
  const auto ds = make_synthetic_anomaly_set(SyntheticAnomalyParams{}, 5, 5, 3);
  for (std::size_t i = 0; i < ds.size(); ++i)
    REQUIRE(run_inference(fresh, loaded.macro, ds.sample(i)) == run_inference(model, m, ds.sample(i)));
  fs::remove(path);
  fs::remove(sidecar_path(path));
}

TEST_CASE("corrupt macro states are rejected") {
  SimConfig cfg;
  cfg.macro = testing::small_config(1, 2, 33);
  EflashMacro m(cfg.macro);
  const auto path = temp_file("corrupt");
  save_macro_state(path, m);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('x');
  }
  CHECK_THROWS_AS(load_macro_state(path, cfg), DatasetError);
  fs::remove(sidecar_path(path));
  CHECK_THROWS_AS(load_macro_state(path, cfg), DatasetError);
  fs::remove(path);
  CHECK_THROWS_AS(load_macro_state(path, cfg), DatasetError);
}

TEST_CASE("report JSON shapes") {
  EflashMacro m(testing::small_config(1, 2, 34));
  const auto sum = program_pattern(m, testing::random_weights(300, 34));
  const auto mj = to_json(sum.margins, m.codec().ladder());
  CHECK(mj.at("states").size() == 16);
  DriftParams p;
  p.sigma_mv = 200.0;
  const auto dj = to_json(m.apply_bake(p), m.codec().map());
  CHECK(dj.at("total_cells") == 512);
  CHECK(dj.at("misreads").get<std::uint64_t>() > 0);
}
