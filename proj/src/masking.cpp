#include "m2a/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "m2a/errors.hpp"
#include "m2a/spectral.hpp"

namespace m2a::masking {

namespace {

constexpr std::uint8_t kMaskFormatVersion = 1;

// t * alpha * H * W picks up representation error (0.2 * 100 is
// 20.000000000000004); snap to the nearest half-integer before rounding.
double snap_half(double x) {
  const double half = std::round(2.0 * x) / 2.0;
  return std::abs(x - half) < 1e-9 ? half : x;
}

void check_level(double level) {
  if (!(level >= 0.0 && level < 1.0)) {
    throw ParameterError("mask level must lie in [0,1), got " + std::to_string(level));
  }
}

struct ImageDims {
  std::size_t batch, channels, height, width;
};

ImageDims image_dims(const ad::Tensor& images) {
  if (images.rank() != 4) {
    throw ShapeError("expected images shaped [B,C,H,W], got " + ad::to_string(images.shape()));
  }
  return {images.dim(0), images.dim(1), images.dim(2), images.dim(3)};
}

void check_mask_dims(const ImageDims& d, const BinaryMask& m) {
  if (m.height() != d.height || m.width() != d.width) {
    throw ShapeError("mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                     " does not match image " + std::to_string(d.height) + "x" +
                     std::to_string(d.width));
  }
}

/// Partial Fisher-Yates: the first k entries become a uniform k-subset.
void choose_subset(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(pool.size() - 1)));
    std::swap(pool[i], pool[j]);
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(in[at + s]) << (8 * s);
  return v;
}

}  // namespace

MaskSchedule make_schedule(std::size_t views, double alpha) {
  if (views < 2) throw ParameterError("schedule needs n >= 2 views, got " + std::to_string(views));
  if (!(alpha > 0.0)) throw ParameterError("schedule needs alpha > 0");
  if (static_cast<double>(views - 1) * alpha >= 1.0) {
    throw ParameterError("invalid schedule: (n-1)*alpha = " +
                         std::to_string(static_cast<double>(views - 1) * alpha) + " must be < 1");
  }
  MaskSchedule s{views, alpha, {}};
  for (std::size_t t = 0; t < views; ++t) s.levels.push_back(static_cast<double>(t) * alpha);
  return s;
}

void BinaryMask::set(std::size_t i, std::size_t j, bool on) {
  auto& bit = bits_[i * width_ + j];
  if (bit == static_cast<std::uint8_t>(on)) return;
  bit = on ? 1 : 0;
  count_ = on ? count_ + 1 : count_ - 1;
}

std::string to_string(Family f) { return f == Family::spatial ? "spatial" : "frequency"; }

std::string to_string(Subtype s) {
  switch (s) {
    case Subtype::patch: return "patch";
    case Subtype::pixel: return "pixel";
    case Subtype::all: return "all";
    case Subtype::low: return "low";
    case Subtype::high: return "high";
  }
  return "?";
}

void MaskPolicy::validate() const {
  const bool spatial_sub = subtype == Subtype::patch || subtype == Subtype::pixel;
  if ((family == Family::spatial) != spatial_sub) {
    throw ParameterError("mask subtype '" + to_string(subtype) + "' is not legal for family '" +
                         to_string(family) + "'");
  }
}

std::size_t MaskPolicy::side_for(std::size_t height, std::size_t width) const {
  if (patch_side != 0) return patch_side;
  return (std::min(height, width) + 7) / 8;
}

std::size_t spatial_budget(std::size_t height, std::size_t width, double level) {
  check_level(level);
  return static_cast<std::size_t>(std::nearbyint(snap_half(level * static_cast<double>(height * width))));
}

std::size_t frequency_budget(std::size_t height, std::size_t width, double level) {
  check_level(level);
  return static_cast<std::size_t>(std::ceil(snap_half(level * static_cast<double>(height * width))));
}

PatchSample sample_patches(std::size_t height, std::size_t width, double level, std::size_t side, Rng& rng) {
  if (side < 1 || side > std::min(height, width)) {
    throw ParameterError("patch side " + std::to_string(side) + " outside [1, " +
                         std::to_string(std::min(height, width)) + "]");
  }
  const std::size_t budget = spatial_budget(height, width, level);
  PatchSample out{BinaryMask(height, width), {}};
  const auto lo = -static_cast<std::int64_t>(side) + 1;
  while (out.mask.masked_count() < budget) {
    const Square sq{rng.uniform_int(lo, static_cast<std::int64_t>(height) - 1),
                    rng.uniform_int(lo, static_cast<std::int64_t>(width) - 1), side};
    const auto r0 = static_cast<std::size_t>(std::max<std::int64_t>(sq.top, 0));
    const auto c0 = static_cast<std::size_t>(std::max<std::int64_t>(sq.left, 0));
    const auto r1 = static_cast<std::size_t>(std::min<std::int64_t>(sq.top + static_cast<std::int64_t>(side), height));
    const auto c1 = static_cast<std::size_t>(std::min<std::int64_t>(sq.left + static_cast<std::int64_t>(side), width));
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = c0; j < c1; ++j) out.mask.set(i, j, true);
    out.squares.push_back(sq);
  }
  return out;
}

BinaryMask sample_patch_mask(std::size_t height, std::size_t width, double level, std::size_t side, Rng& rng) {
  return sample_patches(height, width, level, side, rng).mask;
}

BinaryMask sample_pixel_mask(std::size_t height, std::size_t width, double level, Rng& rng) {
  const std::size_t k = spatial_budget(height, width, level);
  std::vector<std::size_t> pool(height * width);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  choose_subset(pool, k, rng);
  BinaryMask mask(height, width);
  for (std::size_t i = 0; i < k; ++i) mask.set(pool[i] / width, pool[i] % width, true);
  return mask;
}

Region frequency_region(std::size_t height, std::size_t width, Subtype subtype) {
  switch (subtype) {
    case Subtype::all: return {0, height, 0, width};
    case Subtype::low: return {0, height / 2, 0, width / 2};
    case Subtype::high: return {height / 2, height, width / 2, width};
    default: throw ParameterError("'" + to_string(subtype) + "' is not a frequency policy");
  }
}

BinaryMask sample_freq_mask(std::size_t height, std::size_t width, double level, Subtype subtype, Rng& rng) {
  const Region region = frequency_region(height, width, subtype);
  const std::size_t k = frequency_budget(height, width, level);
  if (k > region.size()) throw BudgetError(k, region.size());
  std::vector<std::size_t> pool;
  pool.reserve(region.size());
  for (std::size_t u = region.row_begin; u < region.row_end; ++u)
    for (std::size_t v = region.col_begin; v < region.col_end; ++v) pool.push_back(u * width + v);
  choose_subset(pool, k, rng);
  BinaryMask mask(height, width);
  for (std::size_t i = 0; i < k; ++i) mask.set(pool[i] / width, pool[i] % width, true);
  return mask;
}

BinaryMask conjugate_closure(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  BinaryMask out = mask;
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v)
      if (mask.at(u, v)) out.set((h - u) % h, (w - v) % w, true);
  return out;
}

ad::Tensor apply_spatial_mask(const ad::Tensor& images, const BinaryMask& mask) {
  const ImageDims d = image_dims(images);
  std::vector<BinaryMask> per_image(d.batch, mask);
  return apply_spatial_masks(images, per_image);
}

ad::Tensor apply_spatial_masks(const ad::Tensor& images, std::span<const BinaryMask> masks) {
  const ImageDims d = image_dims(images);
  if (masks.size() != d.batch) {
    throw ShapeError("apply_spatial_masks: " + std::to_string(masks.size()) + " masks for batch of " +
                     std::to_string(d.batch));
  }
  const std::size_t plane = d.height * d.width;
  std::vector<double> keep(images.numel());
  for (std::size_t b = 0; b < d.batch; ++b) {
    check_mask_dims(d, masks[b]);
    const auto bits = masks[b].bits();
    for (std::size_t c = 0; c < d.channels; ++c) {
      double* dst = keep.data() + (b * d.channels + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = bits[p] ? 0.0 : 1.0;
    }
  }
  return ad::mul(images, ad::Tensor(images.shape(), std::move(keep)));
}

FreqMasked apply_freq_mask(const ad::Tensor& images, const BinaryMask& zeroed) {
  const ImageDims d = image_dims(images);
  std::vector<BinaryMask> per_image(d.batch, zeroed);
  return apply_freq_masks(images, per_image);
}

FreqMasked apply_freq_masks(const ad::Tensor& images, std::span<const BinaryMask> zeroed) {
  const ImageDims d = image_dims(images);
  if (zeroed.size() != d.batch) {
    throw ShapeError("apply_freq_masks: " + std::to_string(zeroed.size()) + " masks for batch of " +
                     std::to_string(d.batch));
  }
  const std::size_t plane = d.height * d.width;
  const auto src = images.data();
  std::vector<double> out(images.numel());
  double residue = 0.0;
  for (std::size_t b = 0; b < d.batch; ++b) {
    check_mask_dims(d, zeroed[b]);
    const auto bits = zeroed[b].bits();
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t offset = (b * d.channels + c) * plane;
      auto spec = spectral::dft2(src.subspan(offset, plane), d.height, d.width);
      for (std::size_t p = 0; p < plane; ++p)
        if (bits[p]) spec.bins[p] = 0.0;
      const auto recon = spectral::idft2(spec);
      for (std::size_t p = 0; p < plane; ++p) {
        out[offset + p] = recon.bins[p].real();
        residue = std::max(residue, std::abs(recon.bins[p].imag()));
      }
    }
  }
  return {ad::Tensor(images.shape(), std::move(out)), residue};
}

ViewSet make_views(const ad::Tensor& images, const MaskSchedule& schedule, const MaskPolicy& policy, Rng& rng) {
  policy.validate();
  const ImageDims d = image_dims(images);
  ViewSet out;
  out.views.push_back(images);
  out.masks.emplace_back();
  for (std::size_t t = 1; t < schedule.levels.size(); ++t) {
    const double level = schedule.levels[t];
    std::vector<BinaryMask> masks;
    masks.reserve(d.batch);
    for (std::size_t b = 0; b < d.batch; ++b) {
      switch (policy.subtype) {
        case Subtype::patch:
          masks.push_back(sample_patch_mask(d.height, d.width, level, policy.side_for(d.height, d.width), rng));
          break;
        case Subtype::pixel:
          masks.push_back(sample_pixel_mask(d.height, d.width, level, rng));
          break;
        default: {
          auto m = sample_freq_mask(d.height, d.width, level, policy.subtype, rng);
          masks.push_back(policy.symmetric_closure ? conjugate_closure(m) : std::move(m));
        }
      }
    }
    if (policy.family == Family::spatial) {
      out.views.push_back(apply_spatial_masks(images, masks));
    } else {
      auto masked = apply_freq_masks(images, masks);
      out.max_imag_residue = std::max(out.max_imag_residue, masked.max_imag_residue);
      out.views.push_back(std::move(masked.images));
    }
    out.masks.push_back(std::move(masks));
  }
  return out;
}

std::vector<std::uint8_t> encode_mask(const BinaryMask& mask, Family family, Subtype subtype) {
  std::vector<std::uint8_t> out{'M', '2', 'A', 'M', kMaskFormatVersion, static_cast<std::uint8_t>(family),
                                static_cast<std::uint8_t>(subtype), 0};
  put_u32(out, static_cast<std::uint32_t>(mask.height()));
  put_u32(out, static_cast<std::uint32_t>(mask.width()));
  const auto bits = mask.bits();
  const std::size_t payload_start = out.size();
  out.resize(payload_start + (bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[payload_start + i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

DecodedMask decode_mask(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 16;
  if (bytes.size() < header || bytes[0] != 'M' || bytes[1] != '2' || bytes[2] != 'A' || bytes[3] != 'M') {
    throw IoError("decode_mask: missing M2AM header");
  }
  if (bytes[4] != kMaskFormatVersion) {
    throw IoError("decode_mask: unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > 1 || bytes[6] > 4) throw IoError("decode_mask: bad family/subtype tag");
  const std::size_t h = get_u32(bytes, 8), w = get_u32(bytes, 12);
  if (bytes.size() != header + (h * w + 7) / 8) throw IoError("decode_mask: truncated payload");
  DecodedMask out{BinaryMask(h, w), static_cast<Family>(bytes[5]), static_cast<Subtype>(bytes[6])};
  for (std::size_t i = 0; i < h * w; ++i)
    if (bytes[header + i / 8] & (0x80u >> (i % 8))) out.mask.set(i / w, i % w, true);
  return out;
}

}  // namespace m2a::masking
