#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eflash/cell_array.hpp"

namespace eflash {

// Each macro read yields 256 weights shared by two PEs of 128 lanes.
inline constexpr std::size_t kPeLanes = 128;
inline constexpr std::size_t kPesPerMacro = 2;

enum class Activation { none, relu };

struct LayerDescriptor {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::size_t weight_base_row = 0;  // linear macro row
  std::vector<std::int32_t> bias;   // out_dim entries
  int input_zero_point = 0;
  int output_zero_point = 0;
  std::vector<double> requant_scale;  // per output channel
  Activation activation = Activation::none;

  // Shape, range and accumulator-width checks. Throws ModelError or
  // AccumulatorOverflowRisk.
  void validate() const;
  std::size_t weight_count() const noexcept { return in_dim * out_dim; }
  std::size_t chunks() const noexcept { return (in_dim + kPeLanes - 1) / kPeLanes; }
  std::size_t macro_rows() const noexcept { return (weight_count() + kCellsPerRow - 1) / kCellsPerRow; }
};

using PeWeights = std::span<const std::int8_t, kPeLanes>;
using PeInputs = std::span<const std::int8_t, kPeLanes>;

// sum_k w[k] * (x[k] - zp) in 32-bit arithmetic.
std::int32_t pe_dot(PeWeights weights, PeInputs inputs, int input_zero_point) noexcept;

// clamp(zp + round_half_away_from_zero(acc * scale), -128, 127)
std::int8_t requantize(std::int32_t acc, double scale, int output_zero_point) noexcept;

std::int8_t apply_activation(std::int8_t value, Activation act, int output_zero_point) noexcept;

// PE-array kernel over already-decoded weights (out_dim x in_dim, row-major)
// and a zero-point padded input of chunks()*128 elements. The serial variant
// is the reference schedule; the parallel one splits output channels across
// OpenMP threads. Both issue the same per-channel pe_dot sequence.
void mvm_kernel(std::span<const std::int8_t> weights, const LayerDescriptor& layer,
                std::span<const std::int8_t> padded_inputs, std::span<std::int8_t> out,
                Exec exec);

// Pure-software int8 layer: no macro, no buffers. Used for host-side layers
// and as the numeric baseline.
std::vector<std::int8_t> software_layer(std::span<const std::int8_t> weights,
                                        const LayerDescriptor& layer,
                                        std::span<const std::int8_t> inputs,
                                        Exec exec = Exec::serial);

class PingPongBuffer {
 public:
  explicit PingPongBuffer(std::size_t capacity = 1024);

  std::size_t capacity() const noexcept { return capacity_; }
  int read_half() const noexcept { return read_half_; }
  int write_half() const noexcept { return 1 - read_half_; }

  // Contents of the read half; empty until a layer has been swapped in.
  std::span<const std::int8_t> read() const noexcept;
  // Contents of the write half as last written.
  std::span<const std::int8_t> written() const noexcept;
  void write(std::span<const std::int8_t> values);
  // Exchanges halves. Throws BufferError if nothing was written since the
  // previous swap.
  void swap();
  void reset() noexcept;

 private:
  std::size_t capacity_;
  std::array<std::vector<std::int8_t>, 2> halves_;
  int read_half_ = 0;
  bool write_pending_ = false;
};

enum class FetchSource { input_buffer, ping_pong };

const char* to_string(FetchSource s) noexcept;

struct FetchEvent {
  std::size_t layer;
  FetchSource source;
  std::size_t offset;
};

struct LayerTrace {
  std::size_t layer;
  FetchSource source;
  std::size_t macro_reads;
  std::size_t pe_ops;
};

struct NmcuTrace {
  std::size_t input_loads = 0;
  std::vector<FetchEvent> fetches;
  std::vector<LayerTrace> layers;

  // Maximal runs of consecutive input-buffer fetches.
  std::size_t input_buffer_episodes() const noexcept;
  std::size_t total_macro_reads() const noexcept;
  void clear() noexcept { *this = NmcuTrace{}; }
};

struct NmcuConfig {
  std::size_t input_capacity = 1024;
  std::size_t ping_pong_capacity = 1024;
  Exec exec = Exec::serial;
};

// Near-memory computing unit bound to one macro. Single-threaded per
// inference; the parallel kernel only fans out inside one mvm.
class Nmcu {
 public:
  explicit Nmcu(NmcuConfig config = {});

  const NmcuConfig& config() const noexcept { return config_; }
  const PingPongBuffer& ping_pong() const noexcept { return ping_pong_; }
  const NmcuTrace& trace() const noexcept { return trace_; }
  void clear_trace() noexcept {
    trace_.clear();
    layer_counter_ = 0;
  }

  // Host writes a fresh input vector into the input buffer.
  void load_input(std::span<const std::int8_t> input);

  // 128-element slice starting at `offset`; lanes past the source extent are
  // filled with `pad_value` (the layer's input zero-point).
  std::array<std::int8_t, kPeLanes> fetch_inputs(FetchSource source, std::size_t offset,
                                                 int pad_value);

  // Runs one fully-connected layer whose weights start at
  // layer.weight_base_row, writing the int8 results into the ping-pong write
  // half.
  void mvm(const LayerDescriptor& layer, FetchSource source, EflashMacro& macro);

  void swap_ping_pong() { ping_pong_.swap(); }

  std::span<const std::int8_t> output() const noexcept { return ping_pong_.written(); }

 private:
  std::span<const std::int8_t> source_view(FetchSource source) const noexcept;

  NmcuConfig config_;
  std::vector<std::int8_t> input_buffer_;
  PingPongBuffer ping_pong_;
  NmcuTrace trace_;
  std::size_t layer_counter_ = 0;
};

// Reads the rows holding `layer` and decodes them to signed weights,
// out_dim x in_dim row-major. Counts macro reads.
std::vector<std::int8_t> fetch_layer_weights(const LayerDescriptor& layer, EflashMacro& macro);

}  // namespace eflash
