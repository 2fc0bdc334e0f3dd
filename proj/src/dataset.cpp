#include "eflash/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "eflash/errors.hpp"
#include "eflash/rng.hpp"

namespace eflash {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw DatasetError(path.string() + ": truncated header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(path.string() + ": cannot open");
  return in;
}

std::int8_t quantize_real(double real, double scale, int zero_point) noexcept {
  const double q = std::round(real / scale) + zero_point;
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

int hadamard(std::size_t row, std::size_t col) noexcept {
  return (std::popcount(row & col) & 1) ? -1 : 1;
}

}  // namespace

std::span<const std::int8_t> Dataset::sample(std::size_t i) const {
  if (i >= size()) throw DatasetError("sample index out of range");
  return std::span<const std::int8_t>(samples).subspan(i * dim, dim);
}

std::int8_t quantize_pixel(std::uint8_t pixel, double input_scale, int input_zero_point) noexcept {
  return quantize_real(static_cast<double>(pixel) / 255.0, input_scale, input_zero_point);
}

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t limit, double input_scale, int input_zero_point) {
  if (!(input_scale > 0.0)) throw DatasetError("input scale must be positive");
  auto img = open_binary(images);
  auto lab = open_binary(labels);
  if (read_be32(img, images) != kIdxImagesMagic) throw DatasetError(images.string() + ": bad IDX image magic");
  if (read_be32(lab, labels) != kIdxLabelsMagic) throw DatasetError(labels.string() + ": bad IDX label magic");
  const std::uint32_t n_images = read_be32(img, images);
  const std::uint32_t rows = read_be32(img, images);
  const std::uint32_t cols = read_be32(img, images);
  const std::uint32_t n_labels = read_be32(lab, labels);
  if (n_images != n_labels) {
    throw DatasetError("image count " + std::to_string(n_images) + " does not match label count " +
                       std::to_string(n_labels));
  }

  Dataset ds;
  ds.dim = static_cast<std::size_t>(rows) * cols;
  ds.input_scale = input_scale;
  ds.input_zero_point = input_zero_point;
  const std::size_t n = std::min<std::size_t>(limit, n_images);
  if (n == 0) return ds;

  std::vector<unsigned char> pixels(n * ds.dim);
  if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
    throw DatasetError(images.string() + ": truncated image data");
  }
  std::vector<unsigned char> raw_labels(n);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n))) {
    throw DatasetError(labels.string() + ": truncated label data");
  }
  ds.samples.resize(pixels.size());
  std::transform(pixels.begin(), pixels.end(), ds.samples.begin(), [&](unsigned char p) {
    return quantize_pixel(p, input_scale, input_zero_point);
  });
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  return ds;
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::size_t count, std::size_t rows, std::size_t cols) {
  if (pixels.size() != count * rows * cols) throw DatasetError("pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(path.string() + ": cannot write");
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(count));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(path.string() + ": cannot write");
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset make_synthetic_anomaly_set(const SyntheticAnomalyParams& params, std::size_t normals,
                                   std::size_t anomalies, std::uint64_t seed) {
  const std::size_t d = params.dim;
  if (!std::has_single_bit(d) || params.latent == 0 || params.latent + 1 >= d) {
    throw DatasetError("synthetic set needs a power-of-two dim larger than latent + 1");
  }
  constexpr std::uint64_t kTag = 0x5a17ULL << 48;
  const double norm = 1.0 / std::sqrt(static_cast<double>(d));

  Dataset ds;
  ds.dim = d;
  ds.input_scale = params.input_scale;
  ds.input_zero_point = 0;
  const std::size_t n = normals + anomalies;
  ds.samples.resize(n * d);
  ds.labels.resize(n);

  std::vector<double> x(d);
  for (std::size_t s = 0; s < n; ++s) {
    StreamRng rng(seed, kTag, s);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t i = 1; i <= params.latent; ++i) {
      const double z = unit(rng);
      for (std::size_t k = 0; k < d; ++k) x[k] += z * norm * hadamard(i, k);
    }
    const bool anomaly = s >= normals;
    if (anomaly) {
      std::uniform_int_distribution<std::size_t> pick(params.latent + 1, d - 1);
      const std::size_t row = pick(rng);
      const double a = params.anomaly_amplitude * unit(rng);
      for (std::size_t k = 0; k < d; ++k) x[k] += a * norm * hadamard(row, k);
    }
    for (std::size_t k = 0; k < d; ++k) {
      x[k] += params.noise_sigma * unit(rng);
      ds.samples[s * d + k] = quantize_real(x[k], params.input_scale, 0);
    }
    ds.labels[s] = anomaly ? 1 : 0;
  }
  return ds;
}

QuantModel make_synthetic_autoencoder(const SyntheticAnomalyParams& params) {
  const std::size_t d = params.dim;
  const std::size_t k = params.latent;
  const double root = std::sqrt(static_cast<double>(d));
  const double latent_scale = 4.0 / 127.0;

  QuantModel model;
  model.name = "synthetic-projection-ae";
  model.task = Task::reconstruct;

  QuantLayer enc;
  enc.desc.in_dim = d;
  enc.desc.out_dim = k;
  enc.desc.bias.assign(k, 0);
  enc.desc.requant_scale.assign(k, params.input_scale / (root * latent_scale));
  enc.input_scale = params.input_scale;
  enc.output_scale = latent_scale;
  enc.placement = LayerPlacement::host;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < d; ++i) enc.weights.push_back(static_cast<std::int8_t>(hadamard(j + 1, i)));

  QuantLayer dec;
  dec.desc.in_dim = k;
  dec.desc.out_dim = d;
  dec.desc.bias.assign(d, 0);
  dec.desc.requant_scale.assign(d, latent_scale / (root * params.input_scale));
  dec.input_scale = latent_scale;
  dec.output_scale = params.input_scale;
  dec.placement = LayerPlacement::macro;
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < k; ++i) dec.weights.push_back(static_cast<std::int8_t>(hadamard(i + 1, j)));

  model.layers.push_back(std::move(enc));
  model.layers.push_back(std::move(dec));
  model.validate();
  return model;
}

}  // namespace eflash
