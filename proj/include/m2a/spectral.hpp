#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace m2a::spectral {

using Complex = std::complex<double>;

/// Complex H x W grid in unshifted array order (DC at (0,0)), row-major.
struct Spectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> bins;

  Complex& at(std::size_t u, std::size_t v) { return bins[u * width + v]; }
  const Complex& at(std::size_t u, std::size_t v) const { return bins[u * width + v]; }
};

/// X[u,v] = sum_{i,j} x[i,j] exp(-2*pi*i*(u*i/H + v*j/W)), no normalization.
Spectrum dft2(std::span<const double> channel, std::size_t height, std::size_t width);
Spectrum dft2(const Spectrum& grid);

/// x[i,j] = 1/(HW) sum_{u,v} X[u,v] exp(+2*pi*i*(u*i/H + v*j/W)).
Spectrum idft2(const Spectrum& spec);

/// In-place 1D transform of any length; radix-2 for powers of two, direct sum
/// otherwise. `inverse` flips the exponent sign without scaling.
void dft1(std::span<Complex> data, bool inverse);

}  // namespace m2a::spectral
