#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spectraldiff/core.hpp"
#include "spectraldiff/fft.hpp"
#include "spectraldiff/mask.hpp"
#include "spectraldiff/rng.hpp"
#include "spectraldiff/schedule.hpp"

namespace spectraldiff {

// Which corruption the forward process injects. SpectralMasked is the main
// path; the others exist for ablation-style comparisons.
enum class PerturbationMode { SpatialIid, SpectralUnmasked, SpectralMasked };

inline const char* to_string(PerturbationMode m) {
  switch (m) {
    case PerturbationMode::SpatialIid: return "spatial-iid";
    case PerturbationMode::SpectralUnmasked: return "spectral-unmasked";
    case PerturbationMode::SpectralMasked: return "spectral-masked";
  }
  return "?";
}

inline PerturbationMode mode_from_string(const std::string& s) {
  if (s == "spatial-iid") return PerturbationMode::SpatialIid;
  if (s == "spectral-unmasked") return PerturbationMode::SpectralUnmasked;
  if (s == "spectral-masked") return PerturbationMode::SpectralMasked;
  throw std::invalid_argument("unknown perturbation mode: " + s);
}

// Mask times complex noise, mask broadcast across channels.
inline Spectrum apply_mask(const std::vector<float>& mask, const Spectrum& eps) {
  if (mask.size() != size_t(eps.h) * eps.w)
    throw std::invalid_argument("apply_mask: mask/spectrum shape mismatch");
  Spectrum out = eps;
  for (int y = 0; y < eps.h; ++y)
    for (int x = 0; x < eps.w; ++x) {
      const double m = mask[size_t(y) * eps.w + x];
      for (int ch = 0; ch < eps.c; ++ch) out.at(y, x, ch) *= m;
    }
  return out;
}

// Closed-form jump to step d:
// x_{f,d} = sqrt(abar_d) x_{f,0} + sqrt(1 - abar_d) (M_d .* eps_f).
inline Spectrum forward_spectral(const Spectrum& x_f0, int d, const Spectrum& eps_f,
                                 const std::vector<float>& mask_d,
                                 const NoiseSchedule& sched) {
  if (d < 1 || d > sched.steps)
    throw std::invalid_argument("forward_spectral: step out of range");
  require_same_shape(x_f0, eps_f, "forward_spectral");
  const double abar = sched.alpha_bar_at(d);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  Spectrum masked = apply_mask(mask_d, eps_f);
  Spectrum out = x_f0;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * out.data[i] + b * masked.data[i];
  return out;
}

// One step of the per-step recursion:
// x_{f,d} = sqrt(1 - beta_d) x_{f,d-1} + sqrt(beta_d) (M_d .* eps_f).
inline Spectrum forward_spectral_step(const Spectrum& x_prev, double beta_d,
                                      const Spectrum& eps_f,
                                      const std::vector<float>& mask_d) {
  require_same_shape(x_prev, eps_f, "forward_spectral_step");
  Spectrum masked = apply_mask(mask_d, eps_f);
  Spectrum out = x_prev;
  const double a = std::sqrt(1.0 - beta_d);
  const double b = std::sqrt(beta_d);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * out.data[i] + b * masked.data[i];
  return out;
}

// Real-part projection of an inverse transform, with the discarded imaginary
// energy reported alongside.
struct SpatialProjection {
  Field field;
  double imaginary_energy = 0.0;
};

// x_{s,d} = Re(ifft2(x_{f,d})). Masked noise is generally not Hermitian, so
// the imaginary remainder is nonzero; it is measured, not silently dropped.
inline SpatialProjection to_spatial_sample(const Spectrum& x_fd) {
  const Spectrum z = ifft2(x_fd);
  SpatialProjection out;
  out.field = Field(z.h, z.w, z.c);
  for (size_t i = 0; i < z.data.size(); ++i) {
    out.field.data[i] = z.data[i].real();
    out.imaginary_energy += z.data[i].imag() * z.data[i].imag();
  }
  return out;
}

// Inversion of the closed form:
// eps_s = (x_{s,d} - sqrt(abar_d) x_{s,0}) / sqrt(1 - abar_d).
inline Field induced_noise(const Field& x_sd, const Field& x_s0, double alpha_bar_d) {
  require_same_shape(x_sd, x_s0, "induced_noise");
  if (!(alpha_bar_d < 1.0))
    throw std::invalid_argument("induced_noise: alpha_bar must be < 1 (d >= 1)");
  const double a = std::sqrt(alpha_bar_d);
  const double inv = 1.0 / std::sqrt(1.0 - alpha_bar_d);
  Field eps(x_sd.h, x_sd.w, x_sd.c);
  for (size_t i = 0; i < eps.data.size(); ++i)
    eps.data[i] = (x_sd.data[i] - a * x_s0.data[i]) * inv;
  return eps;
}

// Spatial-domain twin of the per-step rule:
// x_{s,d} = sqrt(1 - beta_d) x_{s,d-1} + sqrt(beta_d) eps_s.
inline Field forward_spatial_step(const Field& x_prev, double beta_d, const Field& eps_s) {
  require_same_shape(x_prev, eps_s, "forward_spatial_step");
  Field out = x_prev;
  const double a = std::sqrt(1.0 - beta_d);
  const double b = std::sqrt(beta_d);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * out.data[i] + b * eps_s.data[i];
  return out;
}

// Draws the spatial perturbation for one training step.
//  SpatialIid:       i.i.d. standard normal per pixel/channel.
//  SpectralMasked:   Re(ifft2(M_d .* eps_f)); expected total energy 1 per
//                    channel (unit-squared-sum mask, unitary IFFT, real part
//                    halving the per-bin energy of 2).
//  SpectralUnmasked: same construction with the uniform unit-energy mask
//                    M = 1/sqrt(HW), so the energy convention matches.
// energy_scale multiplies the spectral perturbations (1.0 = as stated above).
inline Field sample_perturbation(PerturbationMode mode, int d, const MaskBank& bank, int h, int w,
                                 int c, Rng& rng, double energy_scale = 1.0) {
  switch (mode) {
    case PerturbationMode::SpatialIid: {
      Field f(h, w, c);
      for (double& v : f.data) v = rng.normal();
      return f;
    }
    case PerturbationMode::SpectralMasked: {
      if (bank.h != h || bank.w != w)
        throw std::invalid_argument("sample_perturbation: bank resolution mismatch");
      const auto& mask = bank.mask_for_step(d);
      const Spectrum eps_f = sample_complex_gaussian(h, w, c, rng);
      Field out = to_spatial_sample(apply_mask(mask, eps_f)).field;
      for (double& v : out.data) v *= energy_scale;
      return out;
    }
    case PerturbationMode::SpectralUnmasked: {
      const Spectrum eps_f = sample_complex_gaussian(h, w, c, rng);
      const std::vector<float> uniform(size_t(h) * w,
                                       static_cast<float>(1.0 / std::sqrt(double(h) * w)));
      Field out = to_spatial_sample(apply_mask(uniform, eps_f)).field;
      for (double& v : out.data) v *= energy_scale;
      return out;
    }
  }
  throw std::invalid_argument("sample_perturbation: bad mode");
}

}  // namespace spectraldiff
