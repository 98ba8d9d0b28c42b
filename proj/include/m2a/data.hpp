#pragma once

// Synthetic source task, desk-scale corruption analogues and the continual
// domain stream. Stream batches carry no labels; labels live in a separate
// StreamEvaluator consumed only by metric code.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m2a/images.hpp"
#include "m2a/rng.hpp"
#include "m2a/tensor.hpp"

namespace m2a::data {

struct TaskShape {
  std::size_t classes = 10;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
};

struct SyntheticDataset {
  TaskShape shape;
  std::uint64_t seed = 0;
  LabeledImages train;
  LabeledImages stream;  // held-out clean pool the target domains are drawn from
};

/// Bumped whenever generate_source changes its output for a given seed.
inline constexpr int kGeneratorVersion = 2;

/// Textured-pattern classification task: each class is a fixed mixture of
/// oriented colour gratings; samples add a random shift, amplitude jitter, a
/// class-agnostic nuisance grating and pixel noise. Labels are assigned
/// round-robin so class counts differ by at most one. Requires
/// train_size >= 10 * classes.
SyntheticDataset generate_source(std::uint64_t seed, std::size_t train_size, std::size_t stream_size,
                                 const TaskShape& shape = {});

// "M2AD" container: u32 version, u64 K, C, H, W, count; f64 pixels; u32 labels.
void save_images(const std::filesystem::path& path, const LabeledImages& images, std::size_t classes);
LabeledImages load_images(const std::filesystem::path& path, std::size_t* classes = nullptr);

// ---------------------------------------------------------------------------

enum class CorruptionKind : std::uint8_t {
  gaussian_noise,
  shot_noise,
  impulse_noise,
  defocus_blur,
  motion_blur,
  brightness,
  contrast,
  elastic,
  pixelate,
  jpeg,
};

inline constexpr std::size_t kCorruptionKinds = 10;
inline constexpr int kMaxSeverity = 5;

std::string to_string(CorruptionKind kind);
/// Two-letter column label (GN, SN, IN, DB, MB, B, C, ET, P, JC).
std::string short_name(CorruptionKind kind);
CorruptionKind parse_corruption(const std::string& name);

/// All ten kinds in benchmark column order.
std::vector<CorruptionKind> default_order();

struct CorruptionOp {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 5;  // 1..5; 0 is the clean no-op
};

/// Kind-specific strength for severities 1..5 (noise sigma, Poisson rate,
/// impulse fraction, blur radius / length, brightness offset, contrast factor,
/// warp amplitude in pixels, pixelate block, quantizer step).
double severity_parameter(CorruptionKind kind, int severity);

/// Corrupts every image of a [B, C, H, W] batch; output clipped to [0, 1].
ad::Tensor corrupt(const ad::Tensor& images, const CorruptionOp& op, Rng& rng);
/// In-place corruption of one C x H x W image.
void corrupt_image(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width,
                   const CorruptionOp& op, Rng& rng);

// Parameterized primitives behind the severity tables.
void add_gaussian_noise(std::span<double> image, double sigma, Rng& rng);
void add_shot_noise(std::span<double> image, double rate, Rng& rng);
void add_impulse_noise(std::span<double> image, double amount, Rng& rng);
void box_blur(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, std::size_t radius);
void motion_blur(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width,
                 std::size_t length, double angle);
void shift_brightness(std::span<double> image, double offset);
void scale_contrast(std::span<double> image, double factor);
void elastic_warp(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width,
                  double amplitude, Rng& rng);
void pixelate(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, std::size_t block);
void block_quantize(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, double step);
void clip_unit(std::span<double> image);

// ---------------------------------------------------------------------------

/// What the adaptation loop sees: images and their position in the stream.
struct UnlabeledBatch {
  ad::Tensor images;
  std::size_t domain = 0;
  std::size_t index = 0;  // global batch index
};

struct BatchSlot {
  std::size_t domain = 0;
  std::size_t batch_in_domain = 0;
  std::vector<std::size_t> pool_indices;
};

/// Ordered corrupted domains over a clean image pool, materialized lazily
/// and deterministically per batch.
class DomainStream {
 public:
  DomainStream(std::vector<CorruptionOp> domains, std::size_t channels, std::size_t height, std::size_t width,
               std::vector<double> pool_pixels, std::vector<BatchSlot> slots, std::uint64_t seed);

  std::span<const CorruptionOp> domains() const { return domains_; }
  std::size_t batch_count() const { return slots_.size(); }
  std::size_t domain_of(std::size_t batch) const { return slots_.at(batch).domain; }
  std::size_t batch_size(std::size_t batch) const { return slots_.at(batch).pool_indices.size(); }
  UnlabeledBatch batch(std::size_t index) const;

 private:
  std::vector<CorruptionOp> domains_;
  std::size_t channels_, height_, width_;
  std::vector<double> pool_;
  std::vector<BatchSlot> slots_;
  std::uint64_t seed_;
};

/// Holds the hidden labels of a stream; the only route from predictions to errors.
class StreamEvaluator {
 public:
  explicit StreamEvaluator(std::vector<std::vector<int>> labels) : labels_(std::move(labels)) {}
  std::size_t count_errors(std::size_t batch, std::span<const int> predictions) const;
  std::span<const int> labels(std::size_t batch) const { return labels_.at(batch); }
  /// Same batch layout, every label replaced by `sentinel`.
  StreamEvaluator with_sentinel(int sentinel) const;

 private:
  std::vector<std::vector<int>> labels_;
};

struct StreamBundle {
  DomainStream stream;
  StreamEvaluator evaluator;
};

struct StreamSpec {
  std::vector<CorruptionKind> order = default_order();
  int severity = 5;
  std::size_t samples_per_domain = 1000;
  std::size_t batch = 20;
};

/// Visits the domains in order exactly once; within each domain the pool is
/// seeded-shuffled (repeating reshuffled passes when it is smaller than
/// samples_per_domain) and cut into batches, the last one possibly short.
StreamBundle build_stream(const LabeledImages& pool, const StreamSpec& spec, std::uint64_t seed);

}  // namespace m2a::data
