#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eflash/model.hpp"

namespace eflash {

// Pre-quantized int8 samples, row-major.
struct Dataset {
  std::size_t dim = 0;
  std::vector<std::int8_t> samples;
  // Class ids for classification; 1 = anomaly, 0 = normal for reconstruction.
  std::vector<int> labels;
  double input_scale = 1.0;
  int input_zero_point = 0;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const std::int8_t> sample(std::size_t i) const;
};

// real = pixel / 255, q = clamp(round_half_away(real / scale) + zp, -128, 127)
std::int8_t quantize_pixel(std::uint8_t pixel, double input_scale, int input_zero_point) noexcept;

// Reads big-endian IDX files (0x00000803 images, 0x00000801 labels), keeping
// at most `limit` samples. Throws DatasetError on bad magic, truncation or a
// count mismatch.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t limit, double input_scale, int input_zero_point);

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::size_t count, std::size_t rows, std::size_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// Anomaly-detection stand-in. Normal samples lie in an 8-dimensional subspace
// spanned by Walsh-Hadamard rows plus small isotropic noise; anomalies add a
// component along a Hadamard row outside that subspace.
struct SyntheticAnomalyParams {
  std::size_t dim = 64;
  std::size_t latent = 8;
  double noise_sigma = 0.08;
  double anomaly_amplitude = 1.0;
  double input_scale = 1.5 / 127.0;
};

Dataset make_synthetic_anomaly_set(const SyntheticAnomalyParams& params, std::size_t normals,
                                   std::size_t anomalies, std::uint64_t seed);

// Projection autoencoder for the synthetic set: a host-side encoder onto the
// latent subspace followed by a macro-placed decoder with +/-1 weights.
QuantModel make_synthetic_autoencoder(const SyntheticAnomalyParams& params);

}  // namespace eflash
