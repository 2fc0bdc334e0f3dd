#include "eflash/inference.hpp"

#include <algorithm>
#include <thread>

#include "eflash/errors.hpp"
#include "eflash/metrics.hpp"

namespace eflash {

std::size_t rows_required(const QuantModel& model) noexcept {
  std::size_t rows = 0;
  for (const auto& l : model.layers)
    if (l.placement == LayerPlacement::macro) rows += l.desc.macro_rows();
  return rows;
}

DeployReport deploy(QuantModel& model, EflashMacro& macro, std::size_t first_row,
                    int max_pulses_per_cell) {
  model.validate();
  DeployReport report;
  const std::size_t needed = rows_required(model);
  if (first_row + needed > macro.geometry().total_rows()) {
    throw CapacityError("model needs " + std::to_string(needed) + " rows from row " +
                        std::to_string(first_row) + ", macro has " +
                        std::to_string(macro.geometry().total_rows()));
  }

  std::size_t row = first_row;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    LayerPlacementInfo info{i, std::nullopt, 0};
    if (layer.placement == LayerPlacement::macro) {
      const auto summary = program_pattern(macro, layer.weights, row, max_pulses_per_cell);
      layer.desc.weight_base_row = row;
      info.base_row = row;
      info.rows = summary.rows;
      report.margins.merge(summary.margins);
      row += summary.rows;
    }
    report.layers.push_back(info);
  }
  report.rows_used = row - first_row;
  model.deployed = true;
  return report;
}

void apply_placement(QuantModel& model, const std::vector<LayerPlacementInfo>& placement) {
  if (placement.size() != model.layers.size()) throw ModelError("placement does not match the model's layers");
  for (const auto& info : placement) {
    if (info.layer >= model.layers.size()) throw ModelError("placement names an unknown layer");
    auto& layer = model.layers[info.layer];
    const bool on_macro = layer.placement == LayerPlacement::macro;
    if (on_macro != info.base_row.has_value() || (on_macro && info.rows != layer.desc.macro_rows())) {
      throw ModelError("placement of layer " + std::to_string(info.layer) + " does not match the model");
    }
    if (info.base_row) layer.desc.weight_base_row = *info.base_row;
  }
  model.deployed = true;
}

std::vector<std::int8_t> run_inference(const QuantModel& model, EflashMacro& macro, Nmcu& nmcu,
                                       std::span<const std::int8_t> sample) {
  if (!model.deployed) throw ModelError("model has not been deployed to the macro");
  if (sample.size() != model.input_dim()) {
    throw DatasetError("sample has " + std::to_string(sample.size()) + " elements, model expects " +
                       std::to_string(model.input_dim()));
  }

  // Activations living on the host (before the first macro layer or after a
  // host layer); empty while they are held in the NMCU.
  std::vector<std::int8_t> host(sample.begin(), sample.end());
  bool on_host = true;
  bool have_nmcu_output = false;

  for (const auto& layer : model.layers) {
    if (layer.placement == LayerPlacement::host) {
      if (!on_host) {
        const auto out = nmcu.output();
        host.assign(out.begin(), out.end());
        on_host = true;
      }
      host = software_layer(layer.weights, layer.desc, host, nmcu.config().exec);
      continue;
    }
    if (on_host) {
      nmcu.load_input(host);
      nmcu.mvm(layer.desc, FetchSource::input_buffer, macro);
      on_host = false;
    } else {
      nmcu.swap_ping_pong();
      nmcu.mvm(layer.desc, FetchSource::ping_pong, macro);
    }
    have_nmcu_output = true;
  }
  if (on_host || !have_nmcu_output) return host;
  const auto out = nmcu.output();
  return {out.begin(), out.end()};
}

std::vector<std::int8_t> run_inference(const QuantModel& model, EflashMacro& macro,
                                       std::span<const std::int8_t> sample) {
  Nmcu nmcu;
  return run_inference(model, macro, nmcu, sample);
}

std::vector<std::int8_t> software_forward(const QuantModel& model, std::span<const std::int8_t> sample) {
  if (sample.size() != model.input_dim()) throw DatasetError("sample length does not match model input");
  std::vector<std::int8_t> act(sample.begin(), sample.end());
  for (const auto& layer : model.layers) act = software_layer(layer.weights, layer.desc, act);
  return act;
}

double reconstruction_error(const QuantModel& model, std::span<const std::int8_t> input,
                            std::span<const std::int8_t> output) {
  const auto& first = model.layers.front();
  const auto& last = model.layers.back();
  if (!last.output_scale) throw ModelError("reconstruction needs the last layer's output_scale");
  if (input.size() != output.size()) throw DomainError("reconstruction size mismatch");
  double sum = 0.0;
  for (std::size_t k = 0; k < input.size(); ++k) {
    const double x = (input[k] - first.desc.input_zero_point) * first.input_scale;
    const double y = (output[k] - last.desc.output_zero_point) * *last.output_scale;
    sum += (y - x) * (y - x);
  }
  return sum / static_cast<double>(input.size());
}

namespace {

void check_task(const QuantModel& model, const Dataset& dataset) {
  if (dataset.empty()) throw DatasetError("evaluation dataset is empty");
  if (dataset.dim != model.input_dim()) {
    throw DatasetError("dataset dim " + std::to_string(dataset.dim) + " does not match model input " +
                       std::to_string(model.input_dim()));
  }
  if (model.task == Task::reconstruct) {
    for (int l : dataset.labels)
      if (l != 0 && l != 1) throw DatasetError("reconstruct task needs 0/1 anomaly labels");
  } else {
    for (int l : dataset.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= model.output_dim()) {
        throw DatasetError("class label outside the model's output range");
      }
  }
}

// Fills predictions/scores from the per-sample outputs and derives metrics.
void finish(const QuantModel& model, const Dataset& dataset,
            const std::vector<std::vector<std::int8_t>>& outputs, EvalResult& r) {
  r.task = model.task;
  r.samples = dataset.size();
  if (model.task == Task::classify) {
    const std::size_t classes = model.output_dim();
    r.per_class_total.assign(classes, 0);
    r.per_class_correct.assign(classes, 0);
    r.predictions.resize(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      r.predictions[i] = static_cast<int>(argmax(outputs[i]));
      const auto label = static_cast<std::size_t>(dataset.labels[i]);
      ++r.per_class_total[label];
      if (r.predictions[i] == dataset.labels[i]) ++r.per_class_correct[label];
    }
    r.accuracy = accuracy(r.predictions, dataset.labels);
  } else {
    r.scores.resize(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      r.scores[i] = reconstruction_error(model, dataset.sample(i), outputs[i]);
    }
    r.auc = auc_rank(r.scores, dataset.labels);
  }
}

}  // namespace

EvalResult evaluate(const QuantModel& model, const EflashMacro& macro, const Dataset& dataset,
                    const EvalOptions& options) {
  check_task(model, dataset);
  const std::size_t n = dataset.size();
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, n);
  std::vector<std::vector<std::int8_t>> outputs(n);
  std::vector<std::uint64_t> reads(jobs, 0);

  auto shard = [&](std::size_t w) {
    EflashMacro local = macro;
    Nmcu nmcu(options.nmcu);
    const std::size_t begin = n * w / jobs;
    const std::size_t end = n * (w + 1) / jobs;
    for (std::size_t i = begin; i < end; ++i) {
      nmcu.clear_trace();
      outputs[i] = run_inference(model, local, nmcu, dataset.sample(i));
    }
    reads[w] = local.read_events() - macro.read_events();
  };

  if (jobs == 1) {
    shard(0);
  } else {
    std::vector<std::jthread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          shard(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    workers.clear();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EvalResult r;
  for (auto x : reads) r.macro_reads += x;
  finish(model, dataset, outputs, r);
  return r;
}

EvalResult evaluate_software(const QuantModel& model, const Dataset& dataset) {
  check_task(model, dataset);
  std::vector<std::vector<std::int8_t>> outputs(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) outputs[i] = software_forward(model, dataset.sample(i));
  EvalResult r;
  finish(model, dataset, outputs, r);
  return r;
}

}  // namespace eflash
