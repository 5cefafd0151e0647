#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spectraldiff/core.hpp"

namespace spectraldiff {

enum class PeakMode { Range, PaperLiteral };
enum class SsimMode { Global, Windowed };

struct MetricReport {
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim_global = 0.0;
  double ssim_windowed = 0.0;
};

inline double mse(const Field& b, const Field& b_hat) {
  require_same_shape(b, b_hat, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < b.data.size(); ++i) {
    const double d = b.data[i] - b_hat.data[i];
    acc += d * d;
  }
  return acc / double(b.data.size());
}

// 10 log10(MAX^2 / MSE). Range mode takes MAX = 1 (inputs live in [0,1]);
// PaperLiteral takes the max pixel of the reference image b.
inline double psnr(const Field& b, const Field& b_hat, PeakMode mode = PeakMode::Range) {
  const double m = mse(b, b_hat);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  double peak = 1.0;
  if (mode == PeakMode::PaperLiteral) {
    peak = 0.0;
    for (double v : b.data) peak = std::max(peak, v);
  }
  return 10.0 * std::log10(peak * peak / m);
}

namespace detail {

inline constexpr double kSsimC1 = 0.01 * 0.01;  // (K1 L)^2, K1 = 0.01, L = 1
inline constexpr double kSsimC2 = 0.03 * 0.03;  // (K2 L)^2, K2 = 0.03, L = 1

inline double ssim_formula(double mu_x, double mu_y, double var_x, double var_y, double cov) {
  const double num = (2.0 * mu_x * mu_y + kSsimC1) * (2.0 * cov + kSsimC2);
  const double den = (mu_x * mu_x + mu_y * mu_y + kSsimC1) * (var_x + var_y + kSsimC2);
  return num / den;
}

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size_t(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - half, dx = x - half;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[size_t(y) * size + x] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace detail

// Structural similarity with unit exponents: the luminance and
// contrast-structure terms multiplied directly.
//   Global:   one set of per-channel image-wide statistics.
//   Windowed: 11x11 Gaussian window (sigma 1.5), fully-interior positions,
//             averaged over positions and channels.
inline double ssim(const Field& b, const Field& b_hat, SsimMode mode = SsimMode::Global) {
  require_same_shape(b, b_hat, "ssim");
  if (mode == SsimMode::Global) {
    double acc = 0.0;
    const double n = double(b.h) * b.w;
    for (int ch = 0; ch < b.c; ++ch) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) {
          const double px = b.at(y, x, ch), py = b_hat.at(y, x, ch);
          sx += px;
          sy += py;
          sxx += px * px;
          syy += py * py;
          sxy += px * py;
        }
      const double mu_x = sx / n, mu_y = sy / n;
      const double var_x = sxx / n - mu_x * mu_x;
      const double var_y = syy / n - mu_y * mu_y;
      const double cov = sxy / n - mu_x * mu_y;
      acc += detail::ssim_formula(mu_x, mu_y, var_x, var_y, cov);
    }
    return acc / b.c;
  }

  const int win = 11;
  if (b.h < win || b.w < win)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  static const std::vector<double> weights = detail::gaussian_window(win, 1.5);
  double acc = 0.0;
  long positions = 0;
  for (int ch = 0; ch < b.c; ++ch)
    for (int oy = 0; oy + win <= b.h; ++oy)
      for (int ox = 0; ox + win <= b.w; ++ox) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int y = 0; y < win; ++y)
          for (int x = 0; x < win; ++x) {
            const double wgt = weights[size_t(y) * win + x];
            const double px = b.at(oy + y, ox + x, ch);
            const double py = b_hat.at(oy + y, ox + x, ch);
            mx += wgt * px;
            my += wgt * py;
            mxx += wgt * px * px;
            myy += wgt * py * py;
            mxy += wgt * px * py;
          }
        const double var_x = mxx - mx * mx;
        const double var_y = myy - my * my;
        const double cov = mxy - mx * my;
        acc += detail::ssim_formula(mx, my, var_x, var_y, cov);
        ++positions;
      }
  return acc / double(positions);
}

inline MetricReport evaluate_pair(const Field& b, const Field& b_hat,
                                  PeakMode peak = PeakMode::Range) {
  MetricReport r;
  r.mse = mse(b, b_hat);
  r.psnr_db = psnr(b, b_hat, peak);
  r.ssim_global = ssim(b, b_hat, SsimMode::Global);
  r.ssim_windowed = (b.h >= 11 && b.w >= 11) ? ssim(b, b_hat, SsimMode::Windowed)
                                             : r.ssim_global;
  return r;
}

}  // namespace spectraldiff
