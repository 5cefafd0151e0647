#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectraldiff/core.hpp"
#include "spectraldiff/fft.hpp"
#include "spectraldiff/mask.hpp"
#include "spectraldiff/nn/denoiser.hpp"
#include "spectraldiff/rng.hpp"
#include "spectraldiff/schedule.hpp"

namespace spectraldiff {

// Angular energy distribution of a spectrum: 60 bins of 3 degrees covering
// [0, 180) after Hermitian folding.
struct DirectionHistogram {
  static constexpr int kBins = 60;
  std::vector<double> p = std::vector<double>(kBins, 1.0 / kBins);

  static int bin_of(double theta) {
    double t = std::fmod(theta, detail::kPi);
    if (t < 0.0) t += detail::kPi;
    // the nudge keeps grid-aligned angles (exact multiples of the bin width)
    // from falling one bin low through floating-point rounding
    int b = int(t / detail::kPi * kBins + 1e-9);
    return std::min(std::max(b, 0), kBins - 1);
  }

  double sum() const {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
  }
};

// Luminance grayscale (0.299, 0.587, 0.114); single-channel images pass through.
inline Field to_gray(const Field& f) {
  if (f.c == 1) return f;
  if (f.c != 3) throw std::invalid_argument("to_gray: expected 1 or 3 channels");
  Field g(f.h, f.w, 1);
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x)
      g.at(y, x, 0) = 0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2);
  return g;
}

// Histogram of |fft2(gray(O))|^2 by spectral angle, DC and radius < 0.02
// excluded, folded mod 180 degrees, normalized to sum 1. A spectrum with no
// admissible energy (e.g. a constant image) falls back to uniform.
inline DirectionHistogram estimate_direction_distribution(const Field& o) {
  const Spectrum spec = fft2(to_gray(o));
  const FrequencyGrid grid(o.h, o.w);

  DirectionHistogram hist;
  std::vector<double> acc(DirectionHistogram::kBins, 0.0);
  double total = 0.0;
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) {
      const size_t i = size_t(y) * o.w + x;
      if (grid.r[i] < 0.02) continue;  // excludes DC as well
      const double e = std::norm(spec.at(y, x, 0));
      acc[size_t(DirectionHistogram::bin_of(grid.theta[i]))] += e;
      total += e;
    }
  if (!(total > 0.0)) return hist;  // uniform fallback
  for (int b = 0; b < DirectionHistogram::kBins; ++b) hist.p[size_t(b)] = acc[size_t(b)] / total;
  return hist;
}

// Non-uniform step selection: S-1 draws with replacement, weighted by the
// directional probability of each step's mask sector, plus the forced
// terminal step D. Steps are kept sorted ascending (traversed from the back
// during sampling). Duplicates are allowed.
struct StepPlan {
  std::vector<int> steps;  // d_1 <= ... <= d_S, d_S == D

  int count() const { return int(steps.size()); }
};

inline StepPlan sample_steps(const DirectionHistogram& hist, const MaskBank& bank, int big_d,
                             int s, Rng& rng, double temperature = 1.0) {
  if (s < 1) throw std::invalid_argument("sample_steps: S must be >= 1");
  if (big_d < 1 || big_d > int(bank.size()))
    throw std::invalid_argument("sample_steps: D must lie in 1..bank size");
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_steps: temperature must be > 0");

  std::vector<double> w(size_t(big_d), 0.0);
  double total = 0.0;
  for (int d = 1; d <= big_d; ++d) {
    const double theta_d = bank.params_for_step(d).theta;
    double pd = hist.p[size_t(DirectionHistogram::bin_of(theta_d))];
    if (temperature != 1.0) pd = std::pow(pd, 1.0 / temperature);
    w[size_t(d - 1)] = pd;
    total += pd;
  }
  if (!(total > 0.0)) {  // degenerate weights: fall back to uniform
    w.assign(size_t(big_d), 1.0);
    total = double(big_d);
  }

  std::vector<double> cdf(w.size());
  double run = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    run += w[i] / total;
    cdf[i] = run;
  }
  cdf.back() = 1.0;

  StepPlan plan;
  plan.steps.reserve(size_t(s));
  for (int k = 0; k < s - 1; ++k) {
    const double u = rng.uniform();
    const size_t idx = size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    plan.steps.push_back(int(std::min(idx, w.size() - 1)) + 1);
  }
  plan.steps.push_back(big_d);
  std::sort(plan.steps.begin(), plan.steps.end());
  return plan;
}

// Deterministic DDIM trajectory initialized at the observation. eps_fn is any
// callable (x_hat, d, o) -> Field predicting the induced noise; the model
// overload below wraps denoiser_forward. x0_trace, when given, receives the
// unclamped x0 estimate at every visited step.
template <typename EpsFn>
Field ddim_derain_with(const Field& o, EpsFn&& eps_fn, const StepPlan& plan,
                       const NoiseSchedule& sched, std::vector<Field>* x0_trace = nullptr) {
  if (plan.steps.empty()) throw std::invalid_argument("ddim_derain: empty step plan");
  if (plan.steps.back() != sched.steps)
    throw std::invalid_argument("ddim_derain: plan must terminate at d_S = D");
  if (!std::is_sorted(plan.steps.begin(), plan.steps.end()))
    throw std::invalid_argument("ddim_derain: plan must be sorted ascending");
  if (x0_trace) x0_trace->clear();

  Field x_hat = o;
  Field x0(o.h, o.w, o.c);
  for (int i = int(plan.steps.size()) - 1; i >= 0; --i) {
    const int d = plan.steps[size_t(i)];
    const Field eps = eps_fn(x_hat, d, o);
    require_same_shape(eps, x_hat, "ddim_derain: eps prediction");
    const double ab = sched.alpha_bar_at(d);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    for (size_t j = 0; j < x0.data.size(); ++j) x0.data[j] = (x_hat.data[j] - sb * eps.data[j]) / sa;
    for (double v : x0.data)
      if (!std::isfinite(v))
        throw std::runtime_error("ddim_derain: non-finite trajectory at plan index " +
                                 std::to_string(i) + " (step " + std::to_string(d) + ")");
    if (x0_trace) x0_trace->push_back(x0);
    const int d_next = i > 0 ? plan.steps[size_t(i) - 1] : 0;
    const double ab_next = sched.alpha_bar_at(d_next);
    const double sa2 = std::sqrt(ab_next), sb2 = std::sqrt(1.0 - ab_next);
    for (size_t j = 0; j < x_hat.data.size(); ++j)
      x_hat.data[j] = sa2 * x0.data[j] + sb2 * eps.data[j];
  }
  clamp01(x_hat);  // only the final return is clamped
  return x_hat;
}

template <typename T>
Field ddim_derain(const Field& o, const DenoiserModel<T>& model, const MaskBank& bank,
                  const NoiseSchedule& sched, int s, Rng& rng, double temperature = 1.0,
                  std::vector<Field>* x0_trace = nullptr) {
  const DirectionHistogram hist = estimate_direction_distribution(o);
  const StepPlan plan = sample_steps(hist, bank, sched.steps, s, rng, temperature);
  return ddim_derain_with(
      o,
      [&model](const Field& x, int d, const Field& cond) {
        return denoiser_forward(model, x, d, cond);
      },
      plan, sched, x0_trace);
}

}  // namespace spectraldiff
