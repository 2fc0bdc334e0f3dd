#include "eflash/model.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eflash/errors.hpp"

namespace eflash {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ModelError(path + ": " + what);
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

const json& array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  return v;
}

Activation parse_activation(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected \"none\" or \"relu\"");
  const auto s = v.get<std::string>();
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  fail(path, "unknown activation \"" + s + "\"");
}

QuantLayer parse_layer(const json& obj, const std::string& path) {
  QuantLayer layer;
  auto& d = layer.desc;
  const auto in = integer(field(obj, "in", path), path + ".in");
  const auto out = integer(field(obj, "out", path), path + ".out");
  if (in < 1) fail(path + ".in", "must be >= 1");
  if (out < 1) fail(path + ".out", "must be >= 1");
  d.in_dim = static_cast<std::size_t>(in);
  d.out_dim = static_cast<std::size_t>(out);

  const auto& w = array(field(obj, "weights", path), path + ".weights");
  if (w.size() != d.in_dim * d.out_dim) {
    fail(path + ".weights", "has " + std::to_string(w.size()) + " entries, expected in*out = " +
                                std::to_string(d.in_dim * d.out_dim));
  }
  layer.weights.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::string p = path + ".weights[" + std::to_string(i) + "]";
    const auto v = integer(w[i], p);
    if (v < -8 || v > 7) fail(p, "value " + std::to_string(v) + " outside [-8, 7]");
    layer.weights.push_back(static_cast<std::int8_t>(v));
  }

  const auto& b = array(field(obj, "bias", path), path + ".bias");
  if (b.size() != d.out_dim) fail(path + ".bias", "expected " + std::to_string(d.out_dim) + " entries");
  for (std::size_t i = 0; i < b.size(); ++i) {
    const std::string p = path + ".bias[" + std::to_string(i) + "]";
    const auto v = integer(b[i], p);
    if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
      fail(p, "outside int32");
    }
    d.bias.push_back(static_cast<std::int32_t>(v));
  }

  layer.input_scale = number(field(obj, "input_scale", path), path + ".input_scale");
  if (!(layer.input_scale > 0.0)) fail(path + ".input_scale", "must be positive");
  d.input_zero_point = static_cast<int>(integer(field(obj, "input_zp", path), path + ".input_zp"));
  d.output_zero_point = static_cast<int>(integer(field(obj, "output_zp", path), path + ".output_zp"));
  if (d.input_zero_point < -128 || d.input_zero_point > 127) fail(path + ".input_zp", "outside int8");
  if (d.output_zero_point < -128 || d.output_zero_point > 127) fail(path + ".output_zp", "outside int8");

  const auto& rs = array(field(obj, "requant_scales", path), path + ".requant_scales");
  if (rs.size() != d.out_dim) {
    fail(path + ".requant_scales", "expected " + std::to_string(d.out_dim) + " entries");
  }
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const std::string p = path + ".requant_scales[" + std::to_string(i) + "]";
    const double v = number(rs[i], p);
    if (!(v > 0.0)) fail(p, "must be positive");
    d.requant_scale.push_back(v);
  }
  d.activation = parse_activation(field(obj, "activation", path), path + ".activation");

  if (auto it = obj.find("output_scale"); it != obj.end()) {
    layer.output_scale = number(*it, path + ".output_scale");
    if (!(*layer.output_scale > 0.0)) fail(path + ".output_scale", "must be positive");
  }
  if (auto it = obj.find("placement"); it != obj.end()) {
    if (!it->is_string()) fail(path + ".placement", "expected \"macro\" or \"host\"");
    const auto s = it->get<std::string>();
    if (s == "macro") {
      layer.placement = LayerPlacement::macro;
    } else if (s == "host") {
      layer.placement = LayerPlacement::host;
    } else {
      fail(path + ".placement", "unknown placement \"" + s + "\"");
    }
  }
  try {
    d.validate();
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return layer;
}

}  // namespace

const char* to_string(Task t) noexcept { return t == Task::classify ? "classify" : "reconstruct"; }
const char* to_string(Activation a) noexcept { return a == Activation::relu ? "relu" : "none"; }
const char* to_string(LayerPlacement p) noexcept { return p == LayerPlacement::macro ? "macro" : "host"; }

std::size_t QuantModel::input_dim() const {
  if (layers.empty()) throw ModelError("model has no layers");
  return layers.front().desc.in_dim;
}

std::size_t QuantModel::output_dim() const {
  if (layers.empty()) throw ModelError("model has no layers");
  return layers.back().desc.out_dim;
}

std::size_t QuantModel::macro_weight_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers)
    if (l.placement == LayerPlacement::macro) n += l.weights.size();
  return n;
}

void QuantModel::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string path = "layers[" + std::to_string(i) + "]";
    if (l.weights.size() != l.desc.weight_count()) fail(path + ".weights", "size does not match in*out");
    for (std::size_t k = 0; k < l.weights.size(); ++k) {
      if (l.weights[k] < -8 || l.weights[k] > 7) {
        fail(path + ".weights[" + std::to_string(k) + "]", "value outside [-8, 7]");
      }
    }
    try {
      l.desc.validate();
    } catch (const Error& e) {
      fail(path, e.what());
    }
    if (i + 1 < layers.size()) {
      const auto& next = layers[i + 1];
      if (l.desc.out_dim != next.desc.in_dim) {
        fail("layers[" + std::to_string(i + 1) + "].in",
             "dimension mismatch: previous layer produces " + std::to_string(l.desc.out_dim) +
                 ", this layer expects " + std::to_string(next.desc.in_dim));
      }
      if (l.desc.output_zero_point != next.desc.input_zero_point) {
        fail("layers[" + std::to_string(i + 1) + "].input_zp",
             "does not match the previous layer's output_zp");
      }
    }
  }
  if (task == Task::reconstruct && !layers.empty()) {
    if (!layers.back().output_scale) {
      fail("layers[" + std::to_string(layers.size() - 1) + "].output_scale",
           "required for reconstruct models");
    }
    if (output_dim() != input_dim()) fail("layers", "reconstruct model must map input_dim to input_dim");
  }
}

QuantModel parse_model(const json& doc) {
  QuantModel model;
  if (!doc.is_object()) fail("$", "expected a JSON object");
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) fail("name", "expected a string");
    model.name = it->get<std::string>();
  }
  const auto& task = field(doc, "task", "$");
  if (!task.is_string()) fail("task", "expected a string");
  const auto t = task.get<std::string>();
  if (t == "classify") {
    model.task = Task::classify;
  } else if (t == "reconstruct") {
    model.task = Task::reconstruct;
  } else {
    fail("task", "unknown task \"" + t + "\"");
  }
  const auto& layers = array(field(doc, "layers", "$"), "layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    model.layers.push_back(parse_layer(layers[i], "layers[" + std::to_string(i) + "]"));
  }
  model.validate();
  return model;
}

json model_to_json(const QuantModel& model) {
  json doc;
  doc["name"] = model.name;
  doc["task"] = to_string(model.task);
  doc["layers"] = json::array();
  for (const auto& l : model.layers) {
    json j;
    j["in"] = l.desc.in_dim;
    j["out"] = l.desc.out_dim;
    j["weights"] = json::array();
    for (auto w : l.weights) j["weights"].push_back(static_cast<int>(w));
    j["bias"] = l.desc.bias;
    j["input_scale"] = l.input_scale;
    j["input_zp"] = l.desc.input_zero_point;
    j["requant_scales"] = l.desc.requant_scale;
    j["output_zp"] = l.desc.output_zero_point;
    j["activation"] = to_string(l.desc.activation);
    if (l.output_scale) j["output_scale"] = *l.output_scale;
    if (l.placement != LayerPlacement::macro) j["placement"] = to_string(l.placement);
    doc["layers"].push_back(std::move(j));
  }
  return doc;
}

QuantModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError(path.string() + ": cannot open model file");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
  return parse_model(doc);
}

void save_model(const QuantModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ModelError(path.string() + ": cannot write model file");
  out << model_to_json(model).dump() << '\n';
}

}  // namespace eflash
