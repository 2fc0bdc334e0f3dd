#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eflash/nmcu.hpp"

namespace eflash {

enum class Task { classify, reconstruct };
// Where a layer executes: through the macro + NMCU, or on the host CPU.
enum class LayerPlacement { macro, host };

struct QuantLayer {
  LayerDescriptor desc;
  std::vector<std::int8_t> weights;  // out x in, output-channel major
  double input_scale = 1.0;
  std::optional<double> output_scale;
  LayerPlacement placement = LayerPlacement::macro;
};

struct QuantModel {
  std::string name;
  Task task = Task::classify;
  std::vector<QuantLayer> layers;
  // Set by deploy(): linear macro row of each macro-placed layer.
  bool deployed = false;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t macro_weight_count() const noexcept;
  // Dimension chain, zero-point chain, weight range and per-layer checks.
  // Throws ModelError with a field path.
  void validate() const;
};

QuantModel parse_model(const nlohmann::json& doc);
nlohmann::json model_to_json(const QuantModel& model);
// Throws ModelError for unreadable or invalid files.
QuantModel load_model(const std::filesystem::path& path);
void save_model(const QuantModel& model, const std::filesystem::path& path);

const char* to_string(Task t) noexcept;
const char* to_string(Activation a) noexcept;
const char* to_string(LayerPlacement p) noexcept;

}  // namespace eflash
