#include "eflash/nmcu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eflash/errors.hpp"

namespace eflash {

void LayerDescriptor::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ModelError("layer dimensions must be >= 1");
  if (bias.size() != out_dim) {
    throw ModelError("bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(out_dim));
  }
  if (requant_scale.size() != out_dim) {
    throw ModelError("requant_scale has " + std::to_string(requant_scale.size()) +
                     " entries, expected " + std::to_string(out_dim));
  }
  for (std::size_t j = 0; j < out_dim; ++j) {
    if (!(requant_scale[j] > 0.0) || !std::isfinite(requant_scale[j])) {
      throw ModelError("requant_scale[" + std::to_string(j) + "] must be positive");
    }
  }
  auto in_int8 = [](int v) { return v >= -128 && v <= 127; };
  if (!in_int8(input_zero_point)) throw ModelError("input zero-point outside int8");
  if (!in_int8(output_zero_point)) throw ModelError("output zero-point outside int8");

  // |w| <= 8 and |x - zp| <= 255 bound each product; the bias adds on top.
  std::int64_t max_bias = 0;
  for (auto b : bias) max_bias = std::max<std::int64_t>(max_bias, std::abs(static_cast<std::int64_t>(b)));
  const std::int64_t worst = static_cast<std::int64_t>(in_dim) * 8 * 255 + max_bias;
  if (worst > std::numeric_limits<std::int32_t>::max()) {
    throw AccumulatorOverflowRisk("layer " + std::to_string(in_dim) + "x" +
                                  std::to_string(out_dim) +
                                  " can overflow the 32-bit accumulator");
  }
}

std::int32_t pe_dot(PeWeights weights, PeInputs inputs, int input_zero_point) noexcept {
  std::int32_t acc = 0;
  for (std::size_t k = 0; k < kPeLanes; ++k) {
    acc += static_cast<std::int32_t>(weights[k]) *
           (static_cast<std::int32_t>(inputs[k]) - input_zero_point);
  }
  return acc;
}

std::int8_t requantize(std::int32_t acc, double scale, int output_zero_point) noexcept {
  // std::round is half-away-from-zero.
  const double scaled = std::round(static_cast<double>(acc) * scale);
  const double out = std::clamp(static_cast<double>(output_zero_point) + scaled, -128.0, 127.0);
  return static_cast<std::int8_t>(out);
}

std::int8_t apply_activation(std::int8_t value, Activation act, int output_zero_point) noexcept {
  if (act == Activation::relu) {
    return static_cast<std::int8_t>(std::max<int>(value, output_zero_point));
  }
  return value;
}

namespace {

std::int8_t channel_output(std::span<const std::int8_t> weights, const LayerDescriptor& layer,
                           std::span<const std::int8_t> padded_inputs, std::size_t j) {
  const std::size_t in = layer.in_dim;
  const std::int8_t* row = weights.data() + j * in;
  std::int32_t acc = layer.bias[j];
  std::array<std::int8_t, kPeLanes> lane_weights{};
  for (std::size_t chunk = 0; chunk < layer.chunks(); ++chunk) {
    const std::size_t begin = chunk * kPeLanes;
    const std::size_t n = std::min(kPeLanes, in - begin);
    std::copy_n(row + begin, n, lane_weights.begin());
    std::fill(lane_weights.begin() + static_cast<std::ptrdiff_t>(n), lane_weights.end(), 0);
    acc += pe_dot(PeWeights(lane_weights), PeInputs(padded_inputs.subspan(begin).first<kPeLanes>()),
                  layer.input_zero_point);
  }
  const auto q = requantize(acc, layer.requant_scale[j], layer.output_zero_point);
  return apply_activation(q, layer.activation, layer.output_zero_point);
}

}  // namespace

void mvm_kernel(std::span<const std::int8_t> weights, const LayerDescriptor& layer,
                std::span<const std::int8_t> padded_inputs, std::span<std::int8_t> out,
                Exec exec) {
  if (weights.size() != layer.weight_count()) throw ModelError("weight buffer size mismatch");
  if (padded_inputs.size() != layer.chunks() * kPeLanes) throw BufferError("input not padded to PE lanes");
  if (out.size() != layer.out_dim) throw BufferError("output size mismatch");

  const auto n = static_cast<std::ptrdiff_t>(layer.out_dim);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(j)] =
          channel_output(weights, layer, padded_inputs, static_cast<std::size_t>(j));
    }
  } else {
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(j)] =
          channel_output(weights, layer, padded_inputs, static_cast<std::size_t>(j));
    }
  }
}

std::vector<std::int8_t> software_layer(std::span<const std::int8_t> weights,
                                        const LayerDescriptor& layer,
                                        std::span<const std::int8_t> inputs, Exec exec) {
  if (inputs.size() != layer.in_dim) throw BufferError("input length does not match layer");
  std::vector<std::int8_t> padded(layer.chunks() * kPeLanes,
                                  static_cast<std::int8_t>(layer.input_zero_point));
  std::copy(inputs.begin(), inputs.end(), padded.begin());
  std::vector<std::int8_t> out(layer.out_dim);
  mvm_kernel(weights, layer, padded, out, exec);
  return out;
}

PingPongBuffer::PingPongBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("ping-pong capacity must be >= 1");
  for (auto& h : halves_) h.reserve(capacity);
}

std::span<const std::int8_t> PingPongBuffer::read() const noexcept { return halves_[read_half_]; }

std::span<const std::int8_t> PingPongBuffer::written() const noexcept { return halves_[write_half()]; }

void PingPongBuffer::write(std::span<const std::int8_t> values) {
  if (values.size() > capacity_) {
    throw BufferError("layer output of " + std::to_string(values.size()) +
                      " exceeds ping-pong capacity " + std::to_string(capacity_));
  }
  auto& half = halves_[write_half()];
  half.assign(values.begin(), values.end());
  write_pending_ = true;
}

void PingPongBuffer::swap() {
  if (!write_pending_) throw BufferError("ping-pong swap before any layer output was written");
  read_half_ = 1 - read_half_;
  write_pending_ = false;
}

void PingPongBuffer::reset() noexcept {
  for (auto& h : halves_) h.clear();
  read_half_ = 0;
  write_pending_ = false;
}

const char* to_string(FetchSource s) noexcept {
  return s == FetchSource::input_buffer ? "input_buffer" : "ping_pong";
}

std::size_t NmcuTrace::input_buffer_episodes() const noexcept {
  std::size_t episodes = 0;
  bool in_run = false;
  for (const auto& f : fetches) {
    const bool input = f.source == FetchSource::input_buffer;
    if (input && !in_run) ++episodes;
    in_run = input;
  }
  return episodes;
}

std::size_t NmcuTrace::total_macro_reads() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.macro_reads;
  return n;
}

Nmcu::Nmcu(NmcuConfig config) : config_(config), ping_pong_(config.ping_pong_capacity) {
  if (config_.input_capacity == 0) throw ConfigError("input buffer capacity must be >= 1");
}

void Nmcu::load_input(std::span<const std::int8_t> input) {
  if (input.size() > config_.input_capacity) {
    throw BufferError("input of " + std::to_string(input.size()) +
                      " exceeds input buffer capacity " + std::to_string(config_.input_capacity));
  }
  input_buffer_.assign(input.begin(), input.end());
  ping_pong_.reset();
  ++trace_.input_loads;
}

std::span<const std::int8_t> Nmcu::source_view(FetchSource source) const noexcept {
  return source == FetchSource::input_buffer ? std::span<const std::int8_t>(input_buffer_)
                                             : ping_pong_.read();
}

std::array<std::int8_t, kPeLanes> Nmcu::fetch_inputs(FetchSource source, std::size_t offset,
                                                     int pad_value) {
  const auto view = source_view(source);
  if (view.empty()) {
    throw BufferError(std::string("fetch from empty ") + to_string(source));
  }
  if (offset >= view.size()) throw BufferError("fetch offset beyond source extent");
  std::array<std::int8_t, kPeLanes> lanes;
  lanes.fill(static_cast<std::int8_t>(pad_value));
  const std::size_t n = std::min(kPeLanes, view.size() - offset);
  std::copy_n(view.begin() + static_cast<std::ptrdiff_t>(offset), n, lanes.begin());
  trace_.fetches.push_back({layer_counter_, source, offset});
  return lanes;
}

std::vector<std::int8_t> fetch_layer_weights(const LayerDescriptor& layer, EflashMacro& macro) {
  const std::size_t rows = layer.macro_rows();
  std::vector<std::int8_t> weights(layer.weight_count());
  const auto& codec = macro.codec();
  for (std::size_t r = 0; r < rows; ++r) {
    const RowAddress addr = macro.row_address(layer.weight_base_row + r);
    if (!macro.row_programmed(addr.bank, addr.row)) {
      throw UnprogrammedRow("layer weights expected at unprogrammed row " +
                            std::to_string(layer.weight_base_row + r));
    }
    const RowStates states = macro.read_row(addr.bank, addr.row);
    const std::size_t begin = r * kCellsPerRow;
    const std::size_t n = std::min(kCellsPerRow, weights.size() - begin);
    for (std::size_t c = 0; c < n; ++c) {
      weights[begin + c] = static_cast<std::int8_t>(codec.decode_state(states[c]).value());
    }
  }
  return weights;
}

void Nmcu::mvm(const LayerDescriptor& layer, FetchSource source, EflashMacro& macro) {
  layer.validate();
  const auto view = source_view(source);
  if (view.empty()) throw BufferError(std::string("mvm source ") + to_string(source) + " is empty");
  if (view.size() != layer.in_dim) {
    throw BufferError("source holds " + std::to_string(view.size()) + " activations, layer expects " +
                      std::to_string(layer.in_dim));
  }
  if (layer.out_dim > ping_pong_.capacity()) {
    throw BufferError("layer output exceeds ping-pong capacity");
  }

  // Flow control: stream the layer's weight rows once, stage the input
  // vector 128 lanes at a time, then run the PE array.
  const std::uint64_t reads_before = macro.read_events();
  const auto weights = fetch_layer_weights(layer, macro);
  std::vector<std::int8_t> padded;
  padded.reserve(layer.chunks() * kPeLanes);
  for (std::size_t chunk = 0; chunk < layer.chunks(); ++chunk) {
    const auto lanes = fetch_inputs(source, chunk * kPeLanes, layer.input_zero_point);
    padded.insert(padded.end(), lanes.begin(), lanes.end());
  }

  std::vector<std::int8_t> out(layer.out_dim);
  mvm_kernel(weights, layer, padded, out, config_.exec);
  ping_pong_.write(out);

  trace_.layers.push_back({layer_counter_, source,
                           static_cast<std::size_t>(macro.read_events() - reads_before),
                           layer.out_dim * layer.chunks()});
  ++layer_counter_;
}

}  // namespace eflash
