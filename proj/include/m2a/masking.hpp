#pragma once

// Masked-view generation: the increasing schedule m_t = t * alpha, spatial
// (patch, pixel) and frequency (all, low, high) mask samplers, and their
// application to image batches shaped [B, C, H, W].

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "m2a/rng.hpp"
#include "m2a/tensor.hpp"

namespace m2a::masking {

struct MaskSchedule {
  std::size_t views = 0;
  double alpha = 0.0;
  std::vector<double> levels;  // levels[t] = t * alpha
};

/// Requires n >= 2, alpha > 0 and (n-1)*alpha < 1.
MaskSchedule make_schedule(std::size_t views, double alpha);

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width) : height_(height), width_(width), bits_(height * width, 0) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool at(std::size_t i, std::size_t j) const { return bits_[i * width_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool on);
  std::size_t masked_count() const { return count_; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

enum class Family : std::uint8_t { spatial = 0, frequency = 1 };
enum class Subtype : std::uint8_t { patch = 0, pixel = 1, all = 2, low = 3, high = 4 };

std::string to_string(Family f);
std::string to_string(Subtype s);

struct MaskPolicy {
  Family family = Family::spatial;
  Subtype subtype = Subtype::patch;
  std::size_t patch_side = 0;      // 0 selects ceil(min(H,W) / 8)
  bool symmetric_closure = false;  // frequency only: add conjugate mirrors of selected bins

  /// Throws ParameterError when the subtype does not belong to the family.
  void validate() const;
  std::size_t side_for(std::size_t height, std::size_t width) const;
};

/// round-half-to-even(m*H*W), the pixel-mask and patch-mask budget.
std::size_t spatial_budget(std::size_t height, std::size_t width, double level);
/// ceil(m*H*W), the frequency-mask budget.
std::size_t frequency_budget(std::size_t height, std::size_t width, double level);

struct Square {
  std::int64_t top = 0;   // may be negative; the square is clipped at the border
  std::int64_t left = 0;
  std::size_t side = 0;
};

struct PatchSample {
  BinaryMask mask;
  std::vector<Square> squares;  // in the order they were drawn
};

/// Greedy union of side x side squares until the masked count reaches the
/// budget. Top-left corners are uniform over every position whose square
/// intersects the grid.
PatchSample sample_patches(std::size_t height, std::size_t width, double level, std::size_t side, Rng& rng);
BinaryMask sample_patch_mask(std::size_t height, std::size_t width, double level, std::size_t side, Rng& rng);

/// Exactly spatial_budget() ones at a uniform random subset of positions.
BinaryMask sample_pixel_mask(std::size_t height, std::size_t width, double level, Rng& rng);

/// Half-open index block [row_begin,row_end) x [col_begin,col_end).
struct Region {
  std::size_t row_begin = 0, row_end = 0, col_begin = 0, col_end = 0;
  std::size_t size() const { return (row_end - row_begin) * (col_end - col_begin); }
  bool contains(std::size_t u, std::size_t v) const {
    return u >= row_begin && u < row_end && v >= col_begin && v < col_end;
  }
};

/// Omega_all, Omega_low (upper-left quadrant) or Omega_high (lower-right), unshifted.
Region frequency_region(std::size_t height, std::size_t width, Subtype subtype);

/// Indicator of the zeroed bins A_t: a uniform k-subset of the policy region.
/// Throws BudgetError when k exceeds the region size.
BinaryMask sample_freq_mask(std::size_t height, std::size_t width, double level, Subtype subtype, Rng& rng);

/// Adds (-u mod H, -v mod W) for every selected (u, v).
BinaryMask conjugate_closure(const BinaryMask& mask);

/// x * (1 - broadcast_C(M)) with the same mask for every image. Differentiable in x.
ad::Tensor apply_spatial_mask(const ad::Tensor& images, const BinaryMask& mask);
/// One mask per image.
ad::Tensor apply_spatial_masks(const ad::Tensor& images, std::span<const BinaryMask> masks);

struct FreqMasked {
  ad::Tensor images;
  double max_imag_residue = 0.0;  // largest |Im| dropped by the real projection
};

/// Per channel: zero the bins in A, inverse transform, keep the real part.
/// The result is a constant with respect to the trace.
FreqMasked apply_freq_mask(const ad::Tensor& images, const BinaryMask& zeroed);
FreqMasked apply_freq_masks(const ad::Tensor& images, std::span<const BinaryMask> zeroed);

struct ViewSet {
  std::vector<ad::Tensor> views;                 // views[0] is the unmasked anchor
  std::vector<std::vector<BinaryMask>> masks;    // masks[t][b]; empty for t = 0
  double max_imag_residue = 0.0;
};

/// Builds the n masked views of a batch. Masks are drawn view-major, then by
/// image index, independently per image.
ViewSet make_views(const ad::Tensor& images, const MaskSchedule& schedule, const MaskPolicy& policy, Rng& rng);

// Debug dump format: "M2AM", u8 version, u8 family, u8 subtype, u8 reserved,
// u32 H, u32 W (little endian), then row-major bits packed MSB first.
std::vector<std::uint8_t> encode_mask(const BinaryMask& mask, Family family, Subtype subtype);

struct DecodedMask {
  BinaryMask mask;
  Family family = Family::spatial;
  Subtype subtype = Subtype::patch;
};
DecodedMask decode_mask(std::span<const std::uint8_t> bytes);

}  // namespace m2a::masking
