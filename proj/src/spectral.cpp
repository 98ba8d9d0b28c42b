#include "m2a/spectral.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "m2a/errors.hpp"

namespace m2a::spectral {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void radix2(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles evaluated directly rather than by repeated multiplication
      // to keep the error at the direct-sum level.
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(len);
      const Complex w(std::cos(angle), std::sin(angle));
      for (std::size_t i = 0; i < n; i += len) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void direct(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> twiddle(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(n);
    twiddle[k] = Complex(std::cos(angle), std::sin(angle));
  }
  std::vector<Complex> out(n);
  for (std::size_t u = 0; u < n; ++u) {
    Complex acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * twiddle[(u * i) % n];
    out[u] = acc;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

void transform2(Spectrum& grid, bool inverse) {
  const std::size_t h = grid.height, w = grid.width;
  for (std::size_t r = 0; r < h; ++r) dft1(std::span(grid.bins).subspan(r * w, w), inverse);
  std::vector<Complex> column(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) column[r] = grid.bins[r * w + c];
    dft1(column, inverse);
    for (std::size_t r = 0; r < h; ++r) grid.bins[r * w + c] = column[r];
  }
}

}  // namespace

void dft1(std::span<Complex> data, bool inverse) {
  if (data.size() <= 1) return;
  if (is_power_of_two(data.size())) {
    radix2(data, inverse);
  } else {
    direct(data, inverse);
  }
}

Spectrum dft2(std::span<const double> channel, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || channel.size() != height * width) {
    throw ShapeError("dft2: grid of " + std::to_string(channel.size()) + " values is not " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  Spectrum grid{height, width, std::vector<Complex>(channel.begin(), channel.end())};
  transform2(grid, false);
  return grid;
}

Spectrum dft2(const Spectrum& grid) {
  Spectrum out = grid;
  transform2(out, false);
  return out;
}

Spectrum idft2(const Spectrum& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.bins.size() != spec.height * spec.width) {
    throw ShapeError("idft2: malformed spectrum");
  }
  Spectrum out = spec;
  transform2(out, true);
  const double norm = 1.0 / static_cast<double>(spec.height * spec.width);
  for (auto& b : out.bins) b *= norm;
  return out;
}

}  // namespace m2a::spectral
