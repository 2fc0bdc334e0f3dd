// eflash-sim: command-line driver for the 4-bits/cell weight-memory simulator.
//
//   program    deploy a model into a fresh macro, write placement + margins
//   bake       apply retention drift to a saved macro state
//   infer      evaluate a model on a deployed macro (MNIST IDX or synthetic set)
//   hist       VT histogram CSV
//   pumptrace  charge-pump ramp CSV
//   selftest   invariant sweep with a pass/fail table
//   synth      write the synthetic anomaly autoencoder model
//
// Exit codes: 0 ok, 1 other error, 2 config, 3 model/input, 4 capacity,
// 5 verify timeout, 6 unreachable reference.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "eflash/analog.hpp"
#include "eflash/config.hpp"
#include "eflash/dataset.hpp"
#include "eflash/errors.hpp"
#include "eflash/inference.hpp"
#include "eflash/model.hpp"
#include "eflash/report_io.hpp"
#include "eflash/selftest.hpp"

namespace {

using nlohmann::json;
using namespace eflash;

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kModel = 3,
  kCapacity = 4,
  kVerifyTimeout = 5,
  kUnreachable = 6,
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::size_t jobs = 1;
};

SimConfig load_sim_config(const Globals& g) {
  SimConfig cfg = g.config_path.empty() ? parse_config(json::object()) : load_config(g.config_path);
  if (g.seed) cfg.macro.seed = *g.seed;
  return cfg;
}

// Writes to --out, or stdout when it is empty.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(path + ": cannot open output");
  write(out);
}

void emit_json(const std::string& path, const json& doc) {
  emit(path, [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
}

struct ProgramArgs {
  std::string model;
  std::string state;
};

int cmd_program(const Globals& g, const ProgramArgs& a) {
  const SimConfig cfg = load_sim_config(g);
  QuantModel model = load_model(a.model);
  EflashMacro macro(cfg.macro);
  const DeployReport rep = deploy(model, macro, 0, cfg.max_pulses_per_cell);
  if (!a.state.empty()) save_macro_state(a.state, macro, rep);
  json doc{{"model", model.name},
           {"weights", model.macro_weight_count()},
           {"placement", to_json(rep)},
           {"margins", to_json(rep.margins, macro.codec().ladder())}};
  emit_json(g.out_path, doc);
  return kOk;
}

struct BakeArgs {
  std::string state;
  std::string state_out;
  double hours = 160.0;
  double loss = 0.0;
  double sigma = 0.0;
  double temp = 125.0;
};

int cmd_bake(const Globals& g, const BakeArgs& a) {
  const SimConfig cfg = load_sim_config(g);
  auto loaded = load_macro_state(a.state, cfg);
  DriftParams p;
  p.loss_fraction = a.loss;
  p.sigma_mv = a.sigma;
  p.hours = a.hours;
  p.temp_c = a.temp;
  const DriftReport rep = loaded.macro.apply_bake(p);
  std::optional<DeployReport> placement;
  if (loaded.placement) placement = DeployReport{*loaded.placement, 0, {}};
  save_macro_state(a.state_out.empty() ? a.state : a.state_out, loaded.macro, placement);
  emit_json(g.out_path, to_json(rep, loaded.macro.codec().map()));
  return kOk;
}

struct InferArgs {
  std::string model;
  std::string state;
  std::string dataset = "mnist";
  std::string images;
  std::string labels;
  std::size_t limit = 1000;
  std::size_t samples = 1000;
  std::string trace;
};

int cmd_infer(const Globals& g, const InferArgs& a) {
  const SimConfig cfg = load_sim_config(g);
  QuantModel model = load_model(a.model);

  Dataset ds;
  const auto& first = model.layers.front();
  if (a.dataset == "mnist") {
    if (a.images.empty() || a.labels.empty()) throw DatasetError("mnist needs --images and --labels");
    ds = load_mnist_idx(a.images, a.labels, a.limit, first.input_scale, first.desc.input_zero_point);
  } else if (a.dataset == "synth-ae") {
    ds = make_synthetic_anomaly_set(SyntheticAnomalyParams{}, a.samples / 2, a.samples - a.samples / 2,
                                    cfg.macro.seed);
  } else {
    throw DatasetError("unknown dataset \"" + a.dataset + "\"");
  }

  std::optional<EflashMacro> macro;
  if (a.state.empty()) {
    macro.emplace(cfg.macro);
    deploy(model, *macro, 0, cfg.max_pulses_per_cell);
  } else {
    auto loaded = load_macro_state(a.state, cfg);
    if (!loaded.placement) throw DatasetError(a.state + ": state has no recorded placement");
    apply_placement(model, *loaded.placement);
    macro.emplace(std::move(loaded.macro));
  }

  EvalOptions opts;
  opts.jobs = g.jobs;
  opts.nmcu = cfg.nmcu;
  const EvalResult hw = evaluate(model, *macro, ds, opts);
  const EvalResult sw = evaluate_software(model, ds);

  std::size_t agree = 0;
  if (model.task == Task::classify) {
    for (std::size_t i = 0; i < hw.predictions.size(); ++i) agree += hw.predictions[i] == sw.predictions[i];
  }
  json doc{{"model", model.name}, {"dataset", a.dataset}, {"macro", to_json(hw)}, {"software", to_json(sw)}};
  if (model.task == Task::classify) doc["prediction_agreement"] = agree;

  if (!a.trace.empty()) {
    Nmcu nmcu(cfg.nmcu);
    EflashMacro scratch = *macro;
    run_inference(model, scratch, nmcu, ds.sample(0));
    emit_json(a.trace, to_json(nmcu.trace()));
  }
  emit_json(g.out_path, doc);
  return kOk;
}

struct HistArgs {
  std::string state;
  double bin_mv = 10.0;
  double range_mv = 3000.0;
  std::optional<std::size_t> bank;
};

int cmd_hist(const Globals& g, const HistArgs& a) {
  const SimConfig cfg = load_sim_config(g);
  std::optional<EflashMacro> macro;
  if (a.state.empty()) {
    macro.emplace(cfg.macro);
  } else {
    macro.emplace(std::move(load_macro_state(a.state, cfg).macro));
  }
  HistogramSelection sel;
  sel.bank = a.bank;
  const Histogram h = macro->vt_histogram(sel, a.bin_mv, a.range_mv);
  emit(g.out_path, [&](std::ostream& os) { write_histogram_csv(os, h); });
  return kOk;
}

struct PumpArgs {
  std::size_t enable_steps = 300;
  std::size_t disable_steps = 300;
};

int cmd_pumptrace(const Globals& g, const PumpArgs& a) {
  const SimConfig cfg = load_sim_config(g);
  const auto trace = pump_cycle(cfg.macro.pump, a.enable_steps, a.disable_steps);
  emit(g.out_path, [&](std::ostream& os) { write_pump_csv(os, trace); });
  return kOk;
}

int cmd_selftest(const Globals& g) {
  const SimConfig cfg = load_sim_config(g);
  const auto results = run_selftest(cfg.macro.seed);
  print_selftest_table(std::cout, results);
  for (const auto& r : results)
    if (!r.passed) return kOther;
  return kOk;
}

int cmd_synth(const Globals& g) {
  const QuantModel model = make_synthetic_autoencoder(SyntheticAnomalyParams{});
  emit_json(g.out_path, model_to_json(model));
  return kOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModel;
  } catch (const DatasetError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kModel;
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return kCapacity;
  } catch (const VerifyTimeout& e) {
    std::cerr << "verify timeout: " << e.what() << '\n';
    return kVerifyTimeout;
  } catch (const UnreachableReference& e) {
    std::cerr << "unreachable reference: " << e.what() << '\n';
    return kUnreachable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4-bits/cell EFLASH + near-memory compute simulator"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Simulator config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out_path, "Output file (stdout when omitted)");
  app.add_option("--jobs", g.jobs, "Evaluation workers")->check(CLI::PositiveNumber);

  ProgramArgs prog;
  auto* program = app.add_subcommand("program", "Deploy a model and report placement and margins");
  program->add_option("--model", prog.model, "Model JSON")->required();
  program->add_option("--state", prog.state, "Write the programmed macro state here");

  BakeArgs bake_args;
  auto* bake = app.add_subcommand("bake", "Apply retention drift to a saved macro state");
  bake->add_option("--state", bake_args.state, "Macro state to bake")->required();
  bake->add_option("--state-out", bake_args.state_out, "Where to write the baked state (default: in place)");
  bake->add_option("--hours", bake_args.hours, "Bake duration (metadata)");
  bake->add_option("--loss", bake_args.loss, "Proportional charge-loss fraction")->check(CLI::Range(0.0, 1.0));
  bake->add_option("--sigma-mv", bake_args.sigma, "Gaussian VT dispersion in mV")->check(CLI::NonNegativeNumber);
  bake->add_option("--temp-c", bake_args.temp, "Bake temperature (metadata)");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "Evaluate a model through the simulated macro");
  infer->add_option("--model", infer_args.model, "Model JSON")->required();
  infer->add_option("--state", infer_args.state, "Programmed macro state (deploys fresh when omitted)");
  infer->add_option("--dataset", infer_args.dataset, "mnist | synth-ae");
  infer->add_option("--images", infer_args.images, "IDX image file");
  infer->add_option("--labels", infer_args.labels, "IDX label file");
  infer->add_option("--limit", infer_args.limit, "Maximum MNIST samples");
  infer->add_option("--samples", infer_args.samples, "Synthetic samples (half anomalies)");
  infer->add_option("--trace", infer_args.trace, "Write the NMCU fetch trace of the first sample");

  HistArgs hist_args;
  auto* hist = app.add_subcommand("hist", "VT histogram as CSV");
  hist->add_option("--state", hist_args.state, "Macro state (fresh erased macro when omitted)");
  hist->add_option("--bin-mv", hist_args.bin_mv, "Bin width")->check(CLI::PositiveNumber);
  hist->add_option("--range-mv", hist_args.range_mv, "Histogram upper edge")->check(CLI::PositiveNumber);
  hist->add_option("--bank", hist_args.bank, "Restrict to one bank");

  PumpArgs pump_args;
  auto* pump = app.add_subcommand("pumptrace", "Charge-pump enable/disable ramp as CSV");
  pump->add_option("--enable-steps", pump_args.enable_steps, "Steps with the pump enabled");
  pump->add_option("--disable-steps", pump_args.disable_steps, "Steps after disabling");

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");
  auto* synth = app.add_subcommand("synth", "Write the synthetic anomaly autoencoder model JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*program) return guarded([&] { return cmd_program(g, prog); });
  if (*bake) return guarded([&] { return cmd_bake(g, bake_args); });
  if (*infer) return guarded([&] { return cmd_infer(g, infer_args); });
  if (*hist) return guarded([&] { return cmd_hist(g, hist_args); });
  if (*pump) return guarded([&] { return cmd_pumptrace(g, pump_args); });
  if (*selftest) return guarded([&] { return cmd_selftest(g); });
  if (*synth) return guarded([&] { return cmd_synth(g); });
  return kOther;
}
