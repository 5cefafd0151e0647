#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spectraldiff/core.hpp"

namespace spectraldiff {

// Per-step noise variances beta_d and cumulative products
// alpha_bar_d = prod_{t<=d} (1 - beta_t), indexed 1..D with alpha_bar_0 = 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;       // beta[d], d = 1..D; beta[0] unused
  std::vector<double> alpha_bar;  // alpha_bar[d], d = 0..D

  double beta_at(int d) const {
    if (d < 1 || d > steps) throw std::invalid_argument("NoiseSchedule: step out of range");
    return beta[size_t(d)];
  }
  double alpha_bar_at(int d) const {
    if (d < 0 || d > steps) throw std::invalid_argument("NoiseSchedule: step out of range");
    return alpha_bar[size_t(d)];
  }
};

// Cosine schedule: alpha_bar_d = f(d)/f(0) with
// f(d) = cos^2(((d/D + s) / (1 + s)) * pi/2), s = 0.008, and
// beta_d = 1 - alpha_bar_d / alpha_bar_{d-1} clamped to <= 0.999.
// alpha_bar is re-accumulated from the clamped betas so the cumulative-product
// invariant holds exactly (and alpha_bar_D stays strictly positive).
inline NoiseSchedule cosine_schedule(int steps) {
  if (steps < 1) throw std::invalid_argument("cosine_schedule: D must be >= 1");
  const double s = 0.008;
  auto f = [&](double d) {
    const double t = ((d / steps + s) / (1.0 + s)) * (3.141592653589793 / 2.0);
    const double c = std::cos(t);
    return c * c;
  };
  NoiseSchedule sched;
  sched.steps = steps;
  sched.beta.assign(size_t(steps) + 1, 0.0);
  sched.alpha_bar.assign(size_t(steps) + 1, 1.0);
  const double f0 = f(0.0);
  double prev = 1.0;
  for (int d = 1; d <= steps; ++d) {
    const double target = f(static_cast<double>(d)) / f0;
    double beta = 1.0 - target / prev;
    beta = std::min(beta, 0.999);
    beta = std::max(beta, 1e-12);
    sched.beta[size_t(d)] = beta;
    sched.alpha_bar[size_t(d)] = sched.alpha_bar[size_t(d) - 1] * (1.0 - beta);
    prev = target;
  }
  return sched;
}

}  // namespace spectraldiff
