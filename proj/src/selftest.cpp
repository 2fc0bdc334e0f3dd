#include "eflash/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "eflash/analog.hpp"
#include "eflash/cell_array.hpp"
#include "eflash/errors.hpp"
#include "eflash/inference.hpp"
#include "eflash/metrics.hpp"
#include "eflash/nmcu.hpp"
#include "eflash/program_verify.hpp"
#include "eflash/state_codec.hpp"

namespace eflash {

namespace {

using Check = std::function<std::string()>;  // empty string = pass

MacroConfig noiseless(std::size_t banks, std::size_t rows, std::uint64_t seed) {
  MacroConfig cfg;
  cfg.geometry.banks = banks;
  cfg.geometry.rows_per_bank = rows;
  cfg.cells.erased_sigma_mv = 0.0;
  cfg.cells.step_sigma_mv = 0.0;
  cfg.seed = seed;
  return cfg;
}

std::string codec_check() {
  for (int w = -8; w <= 7; ++w) {
    if (decode_state(encode_weight(WeightNibble(w))).value() != w) return "round trip failed at w=" + std::to_string(w);
  }
  for (int s = 0; s + 1 < kNumStates; ++s) {
    if (std::abs(decode_state(CellState(s + 1)).value() - decode_state(CellState(s)).value()) != 1) {
      return "adjacent states " + std::to_string(s) + "/" + std::to_string(s + 1) + " differ by more than 1";
    }
  }
  ReferenceLadder::uniform_default().validate();
  return {};
}

std::string round_trip_check(std::uint64_t seed) {
  EflashMacro macro(noiseless(1, 16, seed));
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> weight(-8, 7);
  std::vector<std::int8_t> pattern(16 * kCellsPerRow);
  for (auto& w : pattern) w = static_cast<std::int8_t>(weight(gen));
  program_pattern(macro, pattern);
  for (std::size_t r = 0; r < 16; ++r) {
    const auto states = macro.read_row(0, r);
    for (std::size_t c = 0; c < kCellsPerRow; ++c) {
      if (macro.codec().decode_state(states[c]).value() != pattern[r * kCellsPerRow + c]) {
        return "mismatch at row " + std::to_string(r) + " col " + std::to_string(c);
      }
    }
  }
  return {};
}

std::string driver_check(std::uint64_t seed) {
  for (auto variant : {DriverVariant::proposed, DriverVariant::conventional}) {
    for (int s = 1; s < kNumStates; ++s) {
      auto cfg = noiseless(1, 1, seed);
      cfg.driver.variant = variant;
      EflashMacro macro(cfg);
      macro.analog().power_up();
      ProgramJob job;
      job.targets.fill(CellState(s));
      bool failed = false;
      try {
        program_row(macro, job);
      } catch (const UnreachableReference&) {
        failed = true;
      }
      const bool expect_fail = cfg.codec.verify_level(CellState(s)) > cfg.driver.reference_limit_mv();
      if (failed != expect_fail) {
        return std::string(variant == DriverVariant::proposed ? "proposed" : "conventional") +
               " driver: unexpected outcome for state " + std::to_string(s);
      }
    }
  }
  return {};
}

std::string pump_check() {
  PumpParams p;
  const auto trace = pump_cycle(p, 400, 400);
  for (const auto& row : trace) {
    if (max_device_stress_mv(row.state, p) > p.vddh_mv) return "overstress at step " + std::to_string(row.step);
  }
  const double vpp4 = trace[400].state.vpp_mv[3];
  if (std::abs(vpp4 - p.vpp4_target_mv) > 0.02 * p.vpp4_target_mv) return "VPP4 not within 2% of target";
  for (double v : trace.back().state.vps_mv)
    if (v != p.vddh_mv) return "VPS not returned to VDDH";
  return {};
}

std::string mvm_check(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> w4(-8, 7), i8(-128, 127), dim(1, 300);
  for (int trial = 0; trial < 20; ++trial) {
    LayerDescriptor layer;
    layer.in_dim = static_cast<std::size_t>(dim(gen));
    layer.out_dim = static_cast<std::size_t>(dim(gen));
    layer.input_zero_point = i8(gen);
    layer.output_zero_point = i8(gen);
    layer.activation = trial % 2 ? Activation::relu : Activation::none;
    std::vector<std::int8_t> weights(layer.weight_count()), x(layer.in_dim);
    for (auto& v : weights) v = static_cast<std::int8_t>(w4(gen));
    for (auto& v : x) v = static_cast<std::int8_t>(i8(gen));
    for (std::size_t j = 0; j < layer.out_dim; ++j) {
      layer.bias.push_back(i8(gen) * 16);
      layer.requant_scale.push_back(0.001 + 0.01 * (j % 7));
    }
    // Scalar loop straight from the definition.
    std::vector<std::int8_t> expect(layer.out_dim);
    for (std::size_t j = 0; j < layer.out_dim; ++j) {
      std::int64_t acc = layer.bias[j];
      for (std::size_t k = 0; k < layer.in_dim; ++k)
        acc += weights[j * layer.in_dim + k] * (x[k] - layer.input_zero_point);
      double q = layer.output_zero_point + std::round(static_cast<double>(acc) * layer.requant_scale[j]);
      q = std::clamp(q, -128.0, 127.0);
      if (layer.activation == Activation::relu) q = std::max<double>(q, layer.output_zero_point);
      expect[j] = static_cast<std::int8_t>(q);
    }
    if (software_layer(weights, layer, x, Exec::serial) != expect) return "serial kernel mismatch";
    if (software_layer(weights, layer, x, Exec::parallel) != expect) return "parallel kernel mismatch";
  }
  return {};
}

std::string data_movement_check(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> w4(-8, 7), i8(-128, 127);
  QuantModel model;
  model.name = "selftest-mlp";
  const std::size_t dims[] = {100, 48, 24, 10};
  for (int l = 0; l < 3; ++l) {
    QuantLayer layer;
    layer.desc.in_dim = dims[l];
    layer.desc.out_dim = dims[l + 1];
    layer.desc.bias.assign(dims[l + 1], 0);
    layer.desc.requant_scale.assign(dims[l + 1], 0.01);
    layer.desc.activation = l < 2 ? Activation::relu : Activation::none;
    layer.weights.resize(layer.desc.weight_count());
    for (auto& w : layer.weights) w = static_cast<std::int8_t>(w4(gen));
    model.layers.push_back(std::move(layer));
  }
  EflashMacro macro(noiseless(1, 32, seed));
  deploy(model, macro);
  std::vector<std::int8_t> x(100);
  for (auto& v : x) v = static_cast<std::int8_t>(i8(gen));
  Nmcu nmcu;
  const auto out = run_inference(model, macro, nmcu, x);
  if (out != software_forward(model, x)) return "macro inference differs from software";
  const auto& t = nmcu.trace();
  if (t.input_loads != 1 || t.input_buffer_episodes() != 1) return "more than one input-buffer episode";
  for (const auto& f : t.fetches) {
    if (f.layer > 0 && f.source != FetchSource::ping_pong) return "later layer fetched from the input buffer";
  }
  return {};
}

std::string auc_check(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + gen() % 99;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(gen() % 10);
      labels[i] = static_cast<int>(i % 2);
    }
    std::uint64_t twice = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!labels[i]) continue;
      ++pos;
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[j]) continue;
        twice += scores[i] > scores[j] ? 2 : scores[i] == scores[j] ? 1 : 0;
      }
    }
    neg = n - pos;
    const double brute = static_cast<double>(twice) / (2.0 * pos * neg);
    if (auc_rank(scores, labels) != brute) return "rank AUC differs from pairwise count";
  }
  return {};
}

std::string bake_check(std::uint64_t seed) {
  auto cfg = MacroConfig{};
  cfg.geometry.banks = 1;
  cfg.geometry.rows_per_bank = 32;
  cfg.seed = seed;
  EflashMacro macro(cfg);
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> weight(-8, 7);
  std::vector<std::int8_t> pattern(32 * kCellsPerRow);
  for (auto& w : pattern) w = static_cast<std::int8_t>(weight(gen));
  program_pattern(macro, pattern);
  const auto& ladder = cfg.codec.ladder();
  const double spacing = ladder.verify_mv[1] - ladder.verify_mv[0];
  const auto serial_copy = macro;
  DriftParams p;
  p.loss_fraction = 0.01;
  p.sigma_mv = spacing / 6.0;
  const auto report = macro.apply_bake(p, Exec::parallel);
  auto other = serial_copy;
  const auto again = other.apply_bake(p, Exec::serial);
  if (report.transitions != again.transitions) return "serial and parallel bake disagree";
  if (report.far_misreads(cfg.codec.map()) != 0) return "misread moved a weight by 2 or more";
  return {};
}

std::string determinism_check(std::uint64_t seed) {
  MacroConfig cfg;
  cfg.geometry.banks = 1;
  cfg.geometry.rows_per_bank = 8;
  cfg.seed = seed;
  EflashMacro a(cfg), b(cfg);
  std::vector<std::int8_t> pattern(4 * kCellsPerRow);
  for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = static_cast<std::int8_t>(static_cast<int>(i % 16) - 8);
  program_pattern(a, pattern);
  program_pattern(b, pattern);
  if (!std::ranges::equal(a.vt_ticks(), b.vt_ticks())) return "same seed produced different arrays";
  return {};
}

}  // namespace

std::vector<SelfTestResult> run_selftest(std::uint64_t seed) {
  const std::vector<std::pair<std::string, Check>> checks = {
      {"codec bijection + adjacency", codec_check},
      {"zero-noise program/read round trip", [seed] { return round_trip_check(seed); }},
      {"WL driver verify range", [seed] { return driver_check(seed); }},
      {"pump regulation + overstress", pump_check},
      {"MVM kernels vs scalar loop", [seed] { return mvm_check(seed); }},
      {"ping-pong zero data movement", [seed] { return data_movement_check(seed); }},
      {"rank AUC vs pairwise", [seed] { return auc_check(seed); }},
      {"bake misread locality", [seed] { return bake_check(seed); }},
      {"seeded determinism", [seed] { return determinism_check(seed); }},
  };
  std::vector<SelfTestResult> results;
  for (const auto& [name, check] : checks) {
    SelfTestResult r{name, false, {}};
    try {
      r.detail = check();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

void print_selftest_table(std::ostream& out, const std::vector<SelfTestResult>& results) {
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  for (const auto& r : results) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << r.name << (r.passed ? "PASS" : "FAIL");
    if (!r.detail.empty()) out << "  " << r.detail;
    out << '\n';
  }
}

}  // namespace eflash
