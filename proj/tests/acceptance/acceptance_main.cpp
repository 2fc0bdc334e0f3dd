// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
// Usage: eflash-acceptance <data-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eflash/analog.hpp"
#include "eflash/cell_array.hpp"
#include "eflash/dataset.hpp"
#include "eflash/errors.hpp"
#include "eflash/inference.hpp"
#include "eflash/metrics.hpp"
#include "eflash/model.hpp"
#include "eflash/nmcu.hpp"
#include "eflash/program_verify.hpp"
#include "eflash/state_codec.hpp"
#include "support/oracle.hpp"

namespace fs = std::filesystem;
using namespace eflash;

namespace {

fs::path g_data;

struct Outcome {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
  void note(const std::string& what) {
    if (ok) detail = what;
  }
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 = untimed
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<std::int8_t> random_weights(std::size_t n, std::mt19937_64& gen) {
  std::uniform_int_distribution<int> w(-8, 7);
  std::vector<std::int8_t> out(n);
  for (auto& v : out) v = static_cast<std::int8_t>(w(gen));
  return out;
}

std::vector<int> widen(std::span<const std::int8_t> v) { return {v.begin(), v.end()}; }

// ---------------------------------------------------------------------------

Outcome codec_exhaustive() {
  Outcome o;
  const StateCodec codec;
  std::set<int> weights;
  for (int s = 0; s < kNumStates; ++s) {
    const int w = codec.decode_state(CellState(s)).value();
    weights.insert(w);
    if (codec.encode_weight(WeightNibble(w)).index() != s) o.fail("encode(decode(s)) != s at s=" + std::to_string(s));
    if (w != oracle::weight_of_state(s)) o.fail("state " + std::to_string(s) + " decodes off the monotone map");
  }
  for (int w = -8; w <= 7; ++w)
    if (codec.decode_state(codec.encode_weight(WeightNibble(w))).value() != w) o.fail("decode(encode(w)) != w");
  if (weights.size() != 16) o.fail("decode is not onto [-8, 7]");
  for (int s = 0; s + 1 < kNumStates; ++s) {
    const int d = std::abs(codec.decode_state(CellState(s + 1)).value() - codec.decode_state(CellState(s)).value());
    if (d != 1) o.fail("adjacent |dw| = " + std::to_string(d) + " at state " + std::to_string(s));
  }
  o.note("16 states, all adjacent |dw| = 1");
  return o;
}

Outcome zero_noise_round_trip() {
  Outcome o;
  MacroConfig cfg;
  cfg.geometry.banks = 4;
  cfg.geometry.rows_per_bank = 250;
  cfg.cells.erased_sigma_mv = 0.0;
  cfg.cells.step_sigma_mv = 0.0;
  cfg.seed = 2024;
  EflashMacro macro(cfg);
  std::mt19937_64 gen(2024);
  const auto w = random_weights(1000 * kCellsPerRow, gen);
  program_pattern(macro, w);
  std::size_t errors = 0;
  for (std::size_t r = 0; r < 1000; ++r) {
    const auto a = macro.row_address(r);
    const auto row = macro.read_row(a.bank, a.row);
    for (std::size_t c = 0; c < kCellsPerRow; ++c)
      errors += oracle::weight_of_state(row[c].index()) != w[r * kCellsPerRow + c];
  }
  if (errors) o.fail(std::to_string(errors) + " weight errors");
  o.note("1000 rows x 256 weights, 0 errors");
  return o;
}

Outcome driver_range() {
  Outcome o;
  const StateCodec codec;
  // Expected failing set straight from the ladder and the driver limit.
  std::set<int> expect_fail;
  for (int s = 1; s < kNumStates; ++s)
    if (codec.verify_level(CellState(s)) > 2500.0 - 700.0) expect_fail.insert(s);

  std::set<int> conv_fail;
  for (int s = 1; s < kNumStates; ++s) {
    for (auto variant : {DriverVariant::conventional, DriverVariant::proposed}) {
      MacroConfig cfg;
      cfg.geometry.banks = 1;
      cfg.geometry.rows_per_bank = 1;
      cfg.driver.variant = variant;
      EflashMacro macro(cfg);
      macro.analog().power_up();
      ProgramJob job;
      job.targets.fill(CellState(s));
      try {
        program_row(macro, job);
        // The conventional driver cannot place the top read boundary, so the
        // readback check decodes the array directly.
        const auto row = macro.peek_row(0, 0);
        if (!std::all_of(row.begin(), row.end(), [s](CellState c) { return c.index() == s; })) {
          o.fail("state " + std::to_string(s) + " read back wrong");
        }
      } catch (const UnreachableReference&) {
        if (variant == DriverVariant::proposed) o.fail("proposed driver failed state " + std::to_string(s));
        else conv_fail.insert(s);
      }
    }
  }
  if (conv_fail != expect_fail) o.fail("conventional failing set differs from the ladder-derived set");
  if (expect_fail != std::set<int>{11, 12, 13, 14, 15}) o.fail("default ladder no longer puts states 11..15 above 1800 mV");

  // Proposed driver covers the whole 0..2500 mV reference range.
  WlDriverConfig prop;
  for (double v = 0.0; v <= 2500.0; v += 100.0) {
    if (!reference_reachable(prop, v) || wl_voltage(prop, WlMode::verify, v) != v) {
      o.fail("proposed driver cannot place " + fmt("%.0f mV", v));
    }
  }
  std::ostringstream ss;
  ss << "conventional fails {";
  for (int s : conv_fail) ss << s << (s == *conv_fail.rbegin() ? "" : ",");
  ss << "}, proposed completes 1..15";
  o.note(ss.str());
  return o;
}

Outcome pump_behavior() {
  Outcome o;
  const PumpParams p;
  const std::size_t enable = 400, disable = 400;
  const auto trace = pump_cycle(p, enable, disable);
  double worst_adjacent = 0.0, worst_any = 0.0;
  bool regulated = false;
  for (const auto& row : trace) {
    const auto& s = row.state;
    for (int n = 0; n + 1 < 4; ++n) worst_adjacent = std::max(worst_adjacent, std::abs(s.vpp_mv[n + 1] - s.vpp_mv[n]));
    worst_any = std::max(worst_any, max_device_stress_mv(s, p));
    regulated = regulated || s.regulated;
  }
  const double vpp4 = trace[enable].state.vpp_mv[3];
  if (!regulated) o.fail("pump never regulated");
  if (std::abs(vpp4 - 10000.0) > 0.02 * 10000.0) o.fail(fmt("steady VPP4 = %.1f mV", vpp4));
  if (worst_adjacent > 2500.0) o.fail(fmt("adjacent tap delta %.1f mV", worst_adjacent));
  if (worst_any > 2500.0) o.fail(fmt("device stress %.1f mV", worst_any));
  o.note(fmt("VPP4 = %.1f mV", vpp4) + fmt(", max |dVPP| = %.1f mV", worst_adjacent) +
         fmt(", max stress = %.1f mV", worst_any) + ", " + std::to_string(trace.size()) + " steps");
  return o;
}

Outcome mvm_oracle() {
  Outcome o;
  // One macro holds a pool of random weight rows; each layer is mapped onto
  // a random row-aligned window, so the weights under test are whatever the
  // macro reads back, checked against the pattern that was programmed.
  MacroConfig cfg;
  cfg.geometry.banks = 4;
  cfg.geometry.rows_per_bank = 256;
  cfg.seed = 77;
  EflashMacro macro(cfg);
  std::mt19937_64 gen(77);
  const std::size_t pool_rows = cfg.geometry.total_rows();
  const auto pool = random_weights(pool_rows * kCellsPerRow, gen);
  program_pattern(macro, pool);

  std::uniform_int_distribution<int> i8(-128, 127), bias(-20000, 20000);
  std::uniform_real_distribution<double> scale(1e-4, 0.02);
  std::size_t cases = 0;

  auto check = [&](std::size_t in, std::size_t out, Exec exec) {
    LayerDescriptor d;
    d.in_dim = in;
    d.out_dim = out;
    d.input_zero_point = i8(gen);
    d.output_zero_point = i8(gen);
    d.activation = gen() % 2 ? Activation::relu : Activation::none;
    for (std::size_t j = 0; j < out; ++j) {
      d.bias.push_back(bias(gen));
      d.requant_scale.push_back(scale(gen));
    }
    d.weight_base_row = gen() % (pool_rows - d.macro_rows() + 1);
    std::vector<std::int8_t> x(in);
    for (auto& v : x) v = static_cast<std::int8_t>(i8(gen));

    oracle::Layer L;
    L.in = in;
    L.out = out;
    const auto first = pool.begin() + static_cast<std::ptrdiff_t>(d.weight_base_row * kCellsPerRow);
    L.w.assign(first, first + static_cast<std::ptrdiff_t>(in * out));
    L.bias.assign(d.bias.begin(), d.bias.end());
    L.scale = d.requant_scale;
    L.in_zp = d.input_zero_point;
    L.out_zp = d.output_zero_point;
    L.relu = d.activation == Activation::relu;

    NmcuConfig nc;
    nc.exec = exec;
    Nmcu nmcu(nc);
    nmcu.load_input(x);
    nmcu.mvm(d, FetchSource::input_buffer, macro);
    ++cases;
    if (widen(nmcu.output()) != oracle::layer(L, x)) {
      o.fail("mismatch at " + std::to_string(in) + "x" + std::to_string(out));
    }
  };

  for (std::size_t in = 1; in <= 8; ++in)
    for (std::size_t out = 1; out <= 8; ++out)
      for (int draw = 0; draw < 10; ++draw) check(in, out, draw % 2 ? Exec::parallel : Exec::serial);
  std::uniform_int_distribution<std::size_t> in_dim(1, 1024), out_dim(1, 256);
  for (int t = 0; t < 200; ++t) {
    // Pin a few draws to the largest shape.
    const std::size_t in = t < 4 ? 1024 : in_dim(gen);
    const std::size_t out = t < 4 ? 256 : out_dim(gen);
    check(in, out, t % 2 ? Exec::parallel : Exec::serial);
  }
  o.note(std::to_string(cases) + " layers bit-exact (640 exhaustive small + 200 random up to 1024x256)");
  return o;
}

Outcome zero_data_movement() {
  Outcome o;
  std::mt19937_64 gen(5);
  QuantModel model;
  model.name = "mlp-3";
  const std::size_t dims[] = {128, 96, 64, 10};
  std::uniform_int_distribution<int> w4(-8, 7), i8(-128, 127);
  for (int l = 0; l < 3; ++l) {
    QuantLayer layer;
    layer.desc.in_dim = dims[l];
    layer.desc.out_dim = dims[l + 1];
    layer.desc.input_zero_point = l == 0 ? 0 : -128;
    layer.desc.output_zero_point = l == 2 ? 0 : -128;
    layer.desc.bias.assign(dims[l + 1], 100);
    layer.desc.requant_scale.assign(dims[l + 1], 0.02);
    layer.desc.activation = l < 2 ? Activation::relu : Activation::none;
    layer.weights = random_weights(layer.desc.weight_count(), gen);
    model.layers.push_back(std::move(layer));
  }
  MacroConfig cfg;
  EflashMacro macro(cfg);
  deploy(model, macro);
  NmcuConfig nc;
  for (std::size_t l = 0; l + 1 < 4; ++l)
    if (dims[l + 1] > nc.ping_pong_capacity) o.fail("test MLP does not fit the ping-pong buffer");

  std::vector<std::int8_t> x(dims[0]);
  for (auto& v : x) v = static_cast<std::int8_t>(i8(gen));
  Nmcu nmcu(nc);
  const auto out = run_inference(model, macro, nmcu, x);
  if (out != software_forward(model, x)) o.fail("output differs from the software forward pass");

  const auto& t = nmcu.trace();
  if (t.input_loads != 1) o.fail("input buffer loaded " + std::to_string(t.input_loads) + " times");
  if (t.input_buffer_episodes() != 1) o.fail(std::to_string(t.input_buffer_episodes()) + " input-buffer episodes");
  bool left_input = false;
  std::size_t pp = 0;
  for (const auto& f : t.fetches) {
    if (f.source == FetchSource::ping_pong) {
      left_input = true;
      ++pp;
    } else if (left_input) {
      o.fail("input-buffer fetch after the ping-pong took over");
    }
    if ((f.layer == 0) != (f.source == FetchSource::input_buffer)) o.fail("layer/source pairing broken");
  }
  if (t.fetches.empty() || t.fetches.front().source != FetchSource::input_buffer) o.fail("first fetch not from input buffer");
  o.note("1 input-buffer episode (" + std::to_string(t.fetches.size() - pp) + " fetches), then " + std::to_string(pp) +
         " ping-pong fetches");
  return o;
}

// Fraction of deployed cells whose decoded state changed, plus far moves.
struct MisreadCount {
  std::uint64_t cells = 0, adjacent = 0, far = 0;
  double rate() const { return static_cast<double>(adjacent + far) / static_cast<double>(cells); }
};

MisreadCount count_misreads(const EflashMacro& before, const EflashMacro& after, std::size_t rows) {
  MisreadCount m;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto a = before.row_address(r);
    const auto x = before.peek_row(a.bank, a.row);
    const auto y = after.peek_row(a.bank, a.row);
    for (std::size_t c = 0; c < kCellsPerRow; ++c) {
      ++m.cells;
      const int d = std::abs(oracle::weight_of_state(x[c].index()) - oracle::weight_of_state(y[c].index()));
      if (d == 1) ++m.adjacent;
      else if (d >= 2) ++m.far;
    }
  }
  return m;
}

Outcome bake_mnist() {
  Outcome o;
  QuantModel model = load_model(g_data / "mnist-mlp-784x64x10.json");
  const auto& first = model.layers.front();
  const Dataset ds = load_mnist_idx(g_data / "mnist-test-1k-images.idx", g_data / "mnist-test-1k-labels.idx", 1000,
                                    first.input_scale, first.desc.input_zero_point);
  if (ds.size() != 1000) o.fail("expected 1000 test samples");

  MacroConfig cfg;
  cfg.seed = 160;
  EflashMacro macro(cfg);
  const auto rep = deploy(model, macro);

  const auto sw = evaluate_software(model, ds);
  // Oracle accuracy, from the independent scalar forward pass.
  std::size_t oracle_correct = 0;
  std::vector<int> oracle_pred(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<int> act(ds.sample(i).begin(), ds.sample(i).end());
    for (const auto& layer : model.layers) {
      oracle::Layer L{layer.desc.in_dim, layer.desc.out_dim, {layer.weights.begin(), layer.weights.end()},
                      {layer.desc.bias.begin(), layer.desc.bias.end()}, layer.desc.requant_scale,
                      layer.desc.input_zero_point, layer.desc.output_zero_point,
                      layer.desc.activation == Activation::relu};
      const std::vector<std::int8_t> in(act.begin(), act.end());
      act = oracle::layer(L, in);
    }
    oracle_pred[i] = static_cast<int>(std::max_element(act.begin(), act.end()) - act.begin());
    oracle_correct += oracle_pred[i] == ds.labels[i];
  }

  EvalOptions opts;
  opts.jobs = 4;
  const auto before = evaluate(model, macro, ds, opts);
  const double a0 = *before.accuracy;
  if (before.predictions != oracle_pred) o.fail("pre-bake macro predictions differ from the oracle");
  if (sw.predictions != oracle_pred) o.fail("software predictions differ from the oracle");
  if (a0 < 0.90) o.fail(fmt("A0 = %.4f below 0.90", a0));
  if (static_cast<double>(oracle_correct) / 1000.0 != a0) o.fail("oracle accuracy differs");

  // Calibrate retention dispersion by bisection so the deployed-cell misread
  // rate lands at 0.3%; misreads grow monotonically with sigma because every
  // cell's draw is fixed by the seed.
  DriftParams p;
  p.loss_fraction = 0.01;
  p.hours = 160.0;
  p.temp_c = 125.0;
  auto trial = [&](double sigma) {
    EflashMacro m = macro;
    p.sigma_mv = sigma;
    m.apply_bake(p);
    return count_misreads(macro, m, rep.rows_used);
  };
  double lo = 0.0, hi = 60.0;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    (trial(mid).rate() < 0.003 ? lo : hi) = mid;
  }
  p.sigma_mv = hi;
  EflashMacro baked = macro;
  baked.apply_bake(p);
  const auto mis = count_misreads(macro, baked, rep.rows_used);
  if (mis.rate() < 0.001 || mis.rate() > 0.005) o.fail(fmt("misread rate %.4f%% outside [0.1, 0.5]%%", 100.0 * mis.rate()));
  if (mis.far != 0) o.fail(std::to_string(mis.far) + " misreads moved a weight by 2+");

  const auto after = evaluate(model, baked, ds, opts);
  const double drop = a0 - *after.accuracy;
  if (drop > 0.005) o.fail(fmt("accuracy drop %.2f pp exceeds 0.5 pp", 100.0 * drop));

  // Determinism: the same seed and parameters reproduce the same baked array.
  EflashMacro again = macro;
  again.apply_bake(p);
  if (!std::ranges::equal(again.vt_ticks(), baked.vt_ticks())) o.fail("bake not deterministic");

  o.note(fmt("A0 = %.2f%%", 100.0 * a0) + fmt(", after bake %.2f%%", 100.0 * *after.accuracy) +
         fmt(" (drop %.2f pp)", 100.0 * drop) + fmt(", misread %.3f%%", 100.0 * mis.rate()) +
         fmt(" at sigma %.2f mV", p.sigma_mv) + ", loss 1%");
  return o;
}

Outcome misread_locality() {
  Outcome o;
  MacroConfig cfg;  // 4 x 64 rows = 64K cells
  cfg.seed = 9;
  EflashMacro macro(cfg);
  std::mt19937_64 gen(9);
  program_pattern(macro, random_weights(cfg.geometry.total_cells(), gen));
  const double spacing = oracle::verify_mv(2) - oracle::verify_mv(1);

  std::string summary;
  for (double loss : {0.0, 0.01}) {
    DriftParams p;
    p.loss_fraction = loss;
    p.sigma_mv = spacing / 6.0;

    // Oracle first: expected number of 2+ state moves from the Gaussian tails
    // at each cell's pre-bake VT (after the deterministic loss term).
    double expected_far = 0.0;
    for (std::size_t r = 0; r < cfg.geometry.total_rows(); ++r) {
      const auto a = macro.row_address(r);
      for (std::size_t c = 0; c < kCellsPerRow; ++c) {
        const double vt = macro.vt_mv(a.bank, a.row, c);
        const double mean = vt - loss * (vt - cfg.cells.erased_mean_mv);
        const int s = oracle::classify(vt);
        if (s + 2 <= 15) expected_far += oracle::upper_tail(oracle::read_mv(s + 2) - mean, p.sigma_mv);
        if (s - 1 >= 1) expected_far += oracle::upper_tail(mean - oracle::read_mv(s - 1), p.sigma_mv);
      }
    }
    if (expected_far > 0.01) o.fail(fmt("tail oracle expects %.3g far misreads", expected_far));

    EflashMacro baked = macro;
    const auto rep = baked.apply_bake(p);
    if (rep.total_cells() != 65536) o.fail("expected 64K cells");
    const auto far = rep.far_misreads(cfg.codec.map());
    const auto own = count_misreads(macro, baked, cfg.geometry.total_rows());
    if (far != 0 || own.far != 0) o.fail(std::to_string(far) + " far misreads at loss " + fmt("%.2f", loss));
    if (own.adjacent != rep.adjacent_misreads()) o.fail("report and recount disagree");
    summary += fmt("loss %.2f: ", loss) + std::to_string(rep.adjacent_misreads()) + " adjacent, 0 far (oracle " +
               fmt("%.2g); ", expected_far);
  }
  o.note(fmt("sigma = spacing/6 = %.1f mV; ", spacing / 6.0) + summary);
  return o;
}

Outcome auc_exact() {
  Outcome o;
  std::size_t sets = 0;
  for (std::size_t n = 2; n <= 100; ++n) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 gen(n * 1000 + seed);
      std::vector<double> s(n);
      std::vector<int> l(n);
      const int levels = 1 + static_cast<int>(seed % 5) * 7;  // from all-tied to sparse ties
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(gen() % static_cast<std::uint64_t>(levels)) * 0.1;
        l[i] = static_cast<int>(gen() % 2);
      }
      l[0] = 0;
      l[n - 1] = 1;
      ++sets;
      if (auc_rank(s, l) != oracle::pairwise_auc(s, l).value()) {
        o.fail("rank AUC differs from pairwise at n=" + std::to_string(n));
      }
    }
  }
  o.note(std::to_string(sets) + " seeded sets, n in [2, 100], exact equality");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  g_data = argc > 1 ? fs::path(argv[1]) : fs::path("tests/data");

  const std::vector<Criterion> criteria = {
      {"codec exhaustive", 1.0, codec_exhaustive},
      {"zero-noise round trip", 10.0, zero_noise_round_trip},
      {"driver range", 0.0, driver_range},
      {"pump behavior", 0.0, pump_behavior},
      {"mvm oracle equivalence", 60.0, mvm_oracle},
      {"zero data movement", 0.0, zero_data_movement},
      {"bake degradation (MNIST)", 120.0, bake_mnist},
      {"misread locality", 0.0, misread_locality},
      {"auc exact", 0.0, auc_exact},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0.0 && secs > c.time_limit_s) o.fail(fmt("took %.2f s", secs) + fmt(", limit %.0f s", c.time_limit_s));
    failures += !o.ok;
    std::cout << (o.ok ? "PASS" : "FAIL") << "  " << c.name << "  [" << fmt("%.2f s", secs) << "]  " << o.detail
              << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failures) << "/"
            << criteria.size() << std::endl;
  return failures ? 1 : 0;
}
