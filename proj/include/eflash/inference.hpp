#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "eflash/dataset.hpp"
#include "eflash/model.hpp"
#include "eflash/nmcu.hpp"
#include "eflash/program_verify.hpp"

namespace eflash {

struct LayerPlacementInfo {
  std::size_t layer = 0;
  std::optional<std::size_t> base_row;  // empty for host layers
  std::size_t rows = 0;
};

struct DeployReport {
  std::vector<LayerPlacementInfo> layers;
  std::size_t rows_used = 0;
  MarginReport margins{};
};

// Programs every macro-placed layer into consecutive rows starting at
// `first_row`, each layer starting on a fresh row, and records the base rows
// into the model's descriptors.
DeployReport deploy(QuantModel& model, EflashMacro& macro, std::size_t first_row = 0,
                    int max_pulses_per_cell = 64);

// Re-attaches a placement recorded by an earlier deploy (e.g. from a saved
// macro state) and marks the model deployed.
void apply_placement(QuantModel& model, const std::vector<LayerPlacementInfo>& placement);

// Rows a deployment would need, without touching a macro.
std::size_t rows_required(const QuantModel& model) noexcept;

// Layer 1 reads the input buffer; later macro layers read the ping-pong
// buffer after a swap. Host layers run in software and reload the input
// buffer for the next macro layer. Returns the final layer's int8 output.
std::vector<std::int8_t> run_inference(const QuantModel& model, EflashMacro& macro, Nmcu& nmcu,
                                       std::span<const std::int8_t> sample);
std::vector<std::int8_t> run_inference(const QuantModel& model, EflashMacro& macro,
                                       std::span<const std::int8_t> sample);

// All layers in software with the model's stored weights.
std::vector<std::int8_t> software_forward(const QuantModel& model, std::span<const std::int8_t> sample);

// Mean squared error between dequantized output and dequantized input.
double reconstruction_error(const QuantModel& model, std::span<const std::int8_t> input,
                            std::span<const std::int8_t> output);

struct EvalResult {
  Task task = Task::classify;
  std::size_t samples = 0;
  std::optional<double> accuracy;
  std::optional<double> auc;
  std::vector<int> predictions;  // classify
  std::vector<double> scores;    // reconstruct
  std::vector<std::uint64_t> per_class_total;
  std::vector<std::uint64_t> per_class_correct;
  std::uint64_t macro_reads = 0;
};

struct EvalOptions {
  // Worker count; each worker owns a copy of the deployed macro.
  std::size_t jobs = 1;
  NmcuConfig nmcu{};
};

EvalResult evaluate(const QuantModel& model, const EflashMacro& macro, const Dataset& dataset,
                    const EvalOptions& options = {});

// Same metrics from the software forward pass.
EvalResult evaluate_software(const QuantModel& model, const Dataset& dataset);

}  // namespace eflash
