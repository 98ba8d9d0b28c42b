#include <algorithm>
#include <cmath>
#include <numbers>

#include "m2a/data.hpp"
#include "m2a/errors.hpp"

namespace m2a::data {

namespace {

using Table = std::array<double, kMaxSeverity>;

// Strength per severity 1..5, chosen so that the pretrained source model's
// error at severity 5 sits several times above its clean error.
constexpr Table kGaussianSigma{0.10, 0.18, 0.28, 0.40, 0.55};
constexpr Table kShotRate{25.0, 10.0, 5.0, 3.0, 1.8};
constexpr Table kImpulseAmount{0.04, 0.09, 0.16, 0.25, 0.35};
constexpr Table kDefocusRadius{1, 2, 2, 3, 3};
constexpr Table kMotionLength{3, 5, 7, 9, 11};
constexpr Table kBrightnessOffset{0.08, 0.15, 0.22, 0.3, 0.38};
constexpr Table kContrastFactor{0.85, 0.7, 0.6, 0.5, 0.42};
constexpr Table kElasticAmplitude{0.75, 1.5, 2.25, 3.0, 4.0};
constexpr Table kPixelateBlock{2, 3, 4, 5, 6};
constexpr Table kQuantizerStep{0.15, 0.3, 0.5, 0.7, 0.9};

constexpr std::size_t kElasticCells = 4;
constexpr std::size_t kQuantTile = 8;

struct KindInfo {
  CorruptionKind kind;
  const char* name;
  const char* short_name;
  const Table* table;
};

constexpr std::array<KindInfo, kCorruptionKinds> kKinds{{
    {CorruptionKind::gaussian_noise, "gaussian-noise", "GN", &kGaussianSigma},
    {CorruptionKind::shot_noise, "shot-noise", "SN", &kShotRate},
    {CorruptionKind::impulse_noise, "impulse-noise", "IN", &kImpulseAmount},
    {CorruptionKind::defocus_blur, "defocus-blur", "DB", &kDefocusRadius},
    {CorruptionKind::motion_blur, "motion-blur", "MB", &kMotionLength},
    {CorruptionKind::brightness, "brightness", "B", &kBrightnessOffset},
    {CorruptionKind::contrast, "contrast", "C", &kContrastFactor},
    {CorruptionKind::elastic, "elastic", "ET", &kElasticAmplitude},
    {CorruptionKind::pixelate, "pixelate", "P", &kPixelateBlock},
    {CorruptionKind::jpeg, "jpeg", "JC", &kQuantizerStep},
}};

const KindInfo& info(CorruptionKind kind) {
  const auto idx = static_cast<std::size_t>(kind);
  if (idx >= kKinds.size()) throw ParameterError("unknown corruption kind " + std::to_string(idx));
  return kKinds[idx];
}

void check_image(std::span<const double> image, std::size_t channels, std::size_t height, std::size_t width) {
  if (image.size() != channels * height * width) throw ShapeError("corruption: image size does not match C x H x W");
}

double sample_clamped(std::span<const double> plane, std::size_t height, std::size_t width, std::int64_t i, std::int64_t j) {
  i = std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(height) - 1);
  j = std::clamp<std::int64_t>(j, 0, static_cast<std::int64_t>(width) - 1);
  return plane[static_cast<std::size_t>(i) * width + static_cast<std::size_t>(j)];
}

double bilinear(std::span<const double> plane, std::size_t height, std::size_t width, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const double ty = y - fy, tx = x - fx;
  const auto i = static_cast<std::int64_t>(fy), j = static_cast<std::int64_t>(fx);
  const double a = sample_clamped(plane, height, width, i, j);
  const double b = sample_clamped(plane, height, width, i, j + 1);
  const double c = sample_clamped(plane, height, width, i + 1, j);
  const double d = sample_clamped(plane, height, width, i + 1, j + 1);
  return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
}

/// Orthonormal DCT-II basis of size n: basis[k * n + i].
std::vector<double> dct_basis(std::size_t n) {
  std::vector<double> basis(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    const double norm = k == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      basis[k * n + i] = norm * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) /
                                         static_cast<double>(n));
    }
  }
  return basis;
}

void quantize_tile(std::span<double> plane, std::size_t width, std::size_t r0, std::size_t c0, std::size_t rows,
                   std::size_t cols, double step) {
  const auto by = dct_basis(rows);
  const auto bx = dct_basis(cols);
  std::vector<double> tile(rows * cols), tmp(rows * cols), coef(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) tile[i * cols + j] = plane[(r0 + i) * width + c0 + j] - 0.5;
  // coef = By * tile * Bx^T
  for (std::size_t u = 0; u < rows; ++u)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += by[u * rows + i] * tile[i * cols + j];
      tmp[u * cols + j] = acc;
    }
  for (std::size_t u = 0; u < rows; ++u)
    for (std::size_t v = 0; v < cols; ++v) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += tmp[u * cols + j] * bx[v * cols + j];
      const double q = step * (1.0 + static_cast<double>(u + v) / 4.0);
      coef[u * cols + v] = std::round(acc / q) * q;
    }
  // tile = By^T * coef * Bx
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t v = 0; v < cols; ++v) {
      double acc = 0.0;
      for (std::size_t u = 0; u < rows; ++u) acc += by[u * rows + i] * coef[u * cols + v];
      tmp[i * cols + v] = acc;
    }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t v = 0; v < cols; ++v) acc += tmp[i * cols + v] * bx[v * cols + j];
      plane[(r0 + i) * width + c0 + j] = acc + 0.5;
    }
}

}  // namespace

std::string to_string(CorruptionKind kind) { return info(kind).name; }
std::string short_name(CorruptionKind kind) { return info(kind).short_name; }

CorruptionKind parse_corruption(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name || name == k.short_name) return k.kind;
  throw ParameterError("unknown corruption kind '" + name + "'");
}

std::vector<CorruptionKind> default_order() {
  std::vector<CorruptionKind> out;
  for (const auto& k : kKinds) out.push_back(k.kind);
  return out;
}

double severity_parameter(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > kMaxSeverity) {
    throw ParameterError("severity " + std::to_string(severity) + " outside 1..5");
  }
  return (*info(kind).table)[static_cast<std::size_t>(severity - 1)];
}

void clip_unit(std::span<double> image) {
  for (double& v : image) v = std::clamp(v, 0.0, 1.0);
}

void add_gaussian_noise(std::span<double> image, double sigma, Rng& rng) {
  for (double& v : image) v += rng.normal(0.0, sigma);
}

void add_shot_noise(std::span<double> image, double rate, Rng& rng) {
  for (double& v : image) v = static_cast<double>(rng.poisson(std::max(v, 0.0) * rate)) / rate;
}

void add_impulse_noise(std::span<double> image, double amount, Rng& rng) {
  for (double& v : image) {
    if (rng.uniform() < amount) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
}

void box_blur(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, std::size_t radius) {
  check_image(image, channels, height, width);
  const auto r = static_cast<std::int64_t>(radius);
  const double norm = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
  std::vector<double> src;
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = image.subspan(c * height * width, height * width);
    src.assign(plane.begin(), plane.end());
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        double acc = 0.0;
        for (std::int64_t di = -r; di <= r; ++di)
          for (std::int64_t dj = -r; dj <= r; ++dj)
            acc += sample_clamped(src, height, width, static_cast<std::int64_t>(i) + di, static_cast<std::int64_t>(j) + dj);
        plane[i * width + j] = acc * norm;
      }
  }
}

void motion_blur(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width,
                 std::size_t length, double angle) {
  check_image(image, channels, height, width);
  if (length == 0) throw ParameterError("motion_blur: length must be positive");
  std::vector<std::pair<std::int64_t, std::int64_t>> taps;
  const double half = static_cast<double>(length - 1) / 2.0;
  for (std::size_t k = 0; k < length; ++k) {
    const double t = static_cast<double>(k) - half;
    taps.emplace_back(std::lround(t * std::sin(angle)), std::lround(t * std::cos(angle)));
  }
  std::vector<double> src;
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = image.subspan(c * height * width, height * width);
    src.assign(plane.begin(), plane.end());
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        double acc = 0.0;
        for (const auto& [di, dj] : taps)
          acc += sample_clamped(src, height, width, static_cast<std::int64_t>(i) + di, static_cast<std::int64_t>(j) + dj);
        plane[i * width + j] = acc / static_cast<double>(taps.size());
      }
  }
}

void shift_brightness(std::span<double> image, double offset) {
  for (double& v : image) v += offset;
}

void scale_contrast(std::span<double> image, double factor) {
  if (image.empty()) return;
  double mean = 0.0;
  for (double v : image) mean += v;
  mean /= static_cast<double>(image.size());
  for (double& v : image) v = (v - mean) * factor + mean;
}

void elastic_warp(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width,
                  double amplitude, Rng& rng) {
  check_image(image, channels, height, width);
  constexpr std::size_t nodes = kElasticCells + 1;
  std::array<double, nodes * nodes> dy{}, dx{};
  for (std::size_t k = 0; k < nodes * nodes; ++k) {
    dy[k] = rng.normal(0.0, amplitude);
    dx[k] = rng.normal(0.0, amplitude);
  }
  auto field = [&](const std::array<double, nodes * nodes>& f, double gy, double gx) {
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(gy), kElasticCells - 1);
    const auto j = std::min<std::size_t>(static_cast<std::size_t>(gx), kElasticCells - 1);
    const double ty = gy - static_cast<double>(i), tx = gx - static_cast<double>(j);
    return (1 - ty) * ((1 - tx) * f[i * nodes + j] + tx * f[i * nodes + j + 1]) +
           ty * ((1 - tx) * f[(i + 1) * nodes + j] + tx * f[(i + 1) * nodes + j + 1]);
  };
  std::vector<double> src;
  const double sy = static_cast<double>(kElasticCells) / static_cast<double>(std::max<std::size_t>(height - 1, 1));
  const double sx = static_cast<double>(kElasticCells) / static_cast<double>(std::max<std::size_t>(width - 1, 1));
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = image.subspan(c * height * width, height * width);
    src.assign(plane.begin(), plane.end());
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double gy = static_cast<double>(i) * sy, gx = static_cast<double>(j) * sx;
        plane[i * width + j] = bilinear(src, height, width, static_cast<double>(i) + field(dy, gy, gx),
                                        static_cast<double>(j) + field(dx, gy, gx));
      }
  }
}

void pixelate(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, std::size_t block) {
  check_image(image, channels, height, width);
  if (block == 0) throw ParameterError("pixelate: block must be positive");
  if (block == 1) return;
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = image.subspan(c * height * width, height * width);
    for (std::size_t r0 = 0; r0 < height; r0 += block)
      for (std::size_t c0 = 0; c0 < width; c0 += block) {
        const std::size_t r1 = std::min(r0 + block, height), c1 = std::min(c0 + block, width);
        double acc = 0.0;
        for (std::size_t i = r0; i < r1; ++i)
          for (std::size_t j = c0; j < c1; ++j) acc += plane[i * width + j];
        acc /= static_cast<double>((r1 - r0) * (c1 - c0));
        for (std::size_t i = r0; i < r1; ++i)
          for (std::size_t j = c0; j < c1; ++j) plane[i * width + j] = acc;
      }
  }
}

void block_quantize(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, double step) {
  check_image(image, channels, height, width);
  if (!(step > 0.0)) throw ParameterError("block_quantize: step must be positive");
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = image.subspan(c * height * width, height * width);
    for (std::size_t r0 = 0; r0 < height; r0 += kQuantTile)
      for (std::size_t c0 = 0; c0 < width; c0 += kQuantTile)
        quantize_tile(plane, width, r0, c0, std::min(kQuantTile, height - r0), std::min(kQuantTile, width - c0), step);
  }
}

void corrupt_image(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width,
                   const CorruptionOp& op, Rng& rng) {
  check_image(image, channels, height, width);
  if (op.severity == 0) {
    info(op.kind);
    return;
  }
  const double p = severity_parameter(op.kind, op.severity);
  switch (op.kind) {
    case CorruptionKind::gaussian_noise: add_gaussian_noise(image, p, rng); break;
    case CorruptionKind::shot_noise: add_shot_noise(image, p, rng); break;
    case CorruptionKind::impulse_noise: add_impulse_noise(image, p, rng); break;
    case CorruptionKind::defocus_blur: box_blur(image, channels, height, width, static_cast<std::size_t>(p)); break;
    case CorruptionKind::motion_blur:
      motion_blur(image, channels, height, width, static_cast<std::size_t>(p), rng.uniform(0.0, std::numbers::pi));
      break;
    case CorruptionKind::brightness: shift_brightness(image, p); break;
    case CorruptionKind::contrast: scale_contrast(image, p); break;
    case CorruptionKind::elastic: elastic_warp(image, channels, height, width, p, rng); break;
    case CorruptionKind::pixelate: pixelate(image, channels, height, width, static_cast<std::size_t>(p)); break;
    case CorruptionKind::jpeg: block_quantize(image, channels, height, width, p); break;
  }
  clip_unit(image);
}

ad::Tensor corrupt(const ad::Tensor& images, const CorruptionOp& op, Rng& rng) {
  if (images.rank() != 4) throw ShapeError("corrupt: expected [B,C,H,W], got " + ad::to_string(images.shape()));
  const std::size_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  std::vector<double> out(images.data().begin(), images.data().end());
  for (std::size_t b = 0; b < images.dim(0); ++b) {
    corrupt_image(std::span(out).subspan(b * c * h * w, c * h * w), c, h, w, op, rng);
  }
  return ad::Tensor(images.shape(), std::move(out));
}

}  // namespace m2a::data
