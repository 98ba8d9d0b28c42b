#pragma once

// Independent reference implementations used as test oracles. They are
// written for clarity, not speed, and share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace m2a::oracle {

using Complex = std::complex<double>;

/// Direct double sum over both axes; sign -1 forward, +1 inverse (unscaled).
inline std::vector<Complex> direct_dft2(const std::vector<Complex>& x, std::size_t h, std::size_t w, int sign) {
  std::vector<Complex> out(h * w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      Complex acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          // Reduce the phase index modulo the period before scaling to keep
          // the angle small and the oracle itself accurate.
          const double a = static_cast<double>((u * i) % h) / static_cast<double>(h) +
                           static_cast<double>((v * j) % w) / static_cast<double>(w);
          acc += x[i * w + j] * std::polar(1.0, sign * 2.0 * std::numbers::pi * a);
        }
      }
      out[u * w + v] = acc;
    }
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  std::vector<double> e;
  double total = 0.0;
  for (double v : z) {
    e.push_back(std::exp(v));
    total += e.back();
  }
  for (double& v : e) v /= total;
  return e;
}

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

/// -sum_k weight_k log max(logged_k, 1e-12)
inline double cross_entropy(const std::vector<double>& weight, const std::vector<double>& logged) {
  double h = 0.0;
  for (std::size_t k = 0; k < weight.size(); ++k) h -= weight[k] * std::log(std::max(logged[k], 1e-12));
  return h;
}

/// views[t][b] is the probability row of image b in view t.
using Views = std::vector<std::vector<std::vector<double>>>;

/// Anchor terms t = 1..n-1 plus every pair 1 <= r < t <= n-1, written as two
/// explicit loops; each term is a batch mean. `student_weighted` swaps which
/// side weights the logarithm.
inline double mcl(const Views& views, bool student_weighted = false, std::size_t* terms = nullptr) {
  const std::size_t n = views.size(), batch = views[0].size();
  double total = 0.0;
  std::size_t count = 0;
  auto term = [&](std::size_t r, std::size_t t) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      acc += student_weighted ? cross_entropy(views[t][b], views[r][b]) : cross_entropy(views[r][b], views[t][b]);
    }
    total += acc / static_cast<double>(batch);
    ++count;
  };
  for (std::size_t t = 1; t < n; ++t) term(0, t);
  for (std::size_t r = 1; r < n; ++r)
    for (std::size_t t = r + 1; t < n; ++t) term(r, t);
  if (terms) *terms = count;
  return total;
}

inline double eml(const Views& views) {
  double total = 0.0;
  for (const auto& view : views) {
    double acc = 0.0;
    for (const auto& row : view) acc += entropy(row);
    total += acc / static_cast<double>(view.size());
  }
  return total / static_cast<double>(views.size());
}

/// Counts the (target, student) pairs of the consistency loss by brute force
/// over all ordered pairs of distinct views.
inline std::size_t mcl_term_count(std::size_t n) {
  std::size_t count = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t t = 0; t < n; ++t)
      if (r < t) ++count;
  return count;
}

/// Union of clipped side x side squares on an H x W grid.
inline std::vector<std::uint8_t> rasterize(std::size_t h, std::size_t w,
                                           const std::vector<std::pair<std::int64_t, std::int64_t>>& corners,
                                           std::size_t side) {
  std::vector<std::uint8_t> grid(h * w, 0);
  for (const auto& [top, left] : corners) {
    for (std::int64_t i = top; i < top + static_cast<std::int64_t>(side); ++i) {
      for (std::int64_t j = left; j < left + static_cast<std::int64_t>(side); ++j) {
        if (i >= 0 && j >= 0 && i < static_cast<std::int64_t>(h) && j < static_cast<std::int64_t>(w))
          grid[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)] = 1;
      }
    }
  }
  return grid;
}

/// One Adam update of a scalar from zero moments, hand-expanded.
inline double adam_first_step(double theta, double g, double lr, double beta1, double beta2, double eps) {
  const double m = (1.0 - beta1) * g;
  const double v = (1.0 - beta2) * g * g;
  const double m_hat = m / (1.0 - beta1);
  const double v_hat = v / (1.0 - beta2);
  return theta - lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace m2a::oracle
