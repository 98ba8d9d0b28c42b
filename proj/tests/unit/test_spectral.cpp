#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "m2a/rng.hpp"
#include "m2a/spectral.hpp"

using namespace m2a;
using spectral::Complex;

namespace {

std::vector<double> random_grid(std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> x(h * w);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("constant image has a DC-only spectrum") {
  const std::size_t h = 6, w = 5;
  const std::vector<double> x(h * w, 0.7);
  const auto s = spectral::dft2(x, h, w);
  CHECK(std::abs(s.at(0, 0) - Complex(0.7 * h * w)) < 1e-9);
  for (std::size_t i = 1; i < s.bins.size(); ++i) CHECK(std::abs(s.bins[i]) < 1e-9);

  spectral::Spectrum dc{h, w, std::vector<Complex>(h * w)};
  dc.at(0, 0) = 0.7 * h * w;
  const auto back = spectral::idft2(dc);
  for (const auto& v : back.bins) CHECK(std::abs(v - Complex(0.7)) < 1e-12);
}

TEST_CASE("impulse at the origin has a flat spectrum") {
  std::vector<double> x(8 * 8, 0.0);
  x[0] = 1.0;
  const auto s = spectral::dft2(x, 8, 8);
  for (const auto& v : s.bins) CHECK(std::abs(v - Complex(1.0)) < 1e-12);
}

TEST_CASE("dft2 matches the direct-sum oracle on power-of-two and odd grids") {
  Rng rng(5);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {7, 9}, {16, 5}, {1, 4}}) {
    const auto x = random_grid(h, w, rng);
    const auto s = spectral::dft2(x, h, w);
    const auto ref = oracle::direct_dft2(std::vector<Complex>(x.begin(), x.end()), h, w, -1);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(s.bins[i] - ref[i]) < 1e-9);
  }
}

TEST_CASE("roundtrip and Parseval on a 16x16 grid") {
  Rng rng(6);
  const auto x = random_grid(16, 16, rng);
  const auto s = spectral::dft2(x, 16, 16);
  const auto back = spectral::idft2(s);
  double energy = 0.0, spectral_energy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(back.bins[i] - Complex(x[i])) < 1e-9);
    energy += x[i] * x[i];
    spectral_energy += std::norm(s.bins[i]);
  }
  CHECK(std::abs(spectral_energy / 256.0 - energy) / energy < 1e-9);
}

TEST_CASE("real input gives a conjugate-symmetric spectrum") {
  Rng rng(7);
  const std::size_t h = 9, w = 6;
  const auto s = spectral::dft2(random_grid(h, w, rng), h, w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) CHECK(std::abs(s.at(u, v) - std::conj(s.at((h - u) % h, (w - v) % w))) < 1e-9);
}

TEST_CASE("dft1 inverse without scaling") {
  std::vector<Complex> x{1.0, Complex(2.0, -1.0), 0.5};
  const auto original = x;
  spectral::dft1(x, false);
  spectral::dft1(x, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] / 3.0 - original[i]) < 1e-12);
}
