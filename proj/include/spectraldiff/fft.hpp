#pragma once

#include <complex>
#include <vector>

#include "spectraldiff/core.hpp"
#include "spectraldiff/rng.hpp"

namespace spectraldiff {
namespace detail {

using cplx = std::complex<double>;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 Cooley-Tukey, unnormalized. sign = -1 forward, +1 inverse.
inline void fft_pow2(std::vector<cplx>& a, int sign) {
  const size_t n = a.size();
  if (n <= 1) return;
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Bluestein chirp-z transform for arbitrary n, unnormalized.
inline void fft_bluestein(std::vector<cplx>& a, int sign) {
  const size_t n = a.size();
  const size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> chirp(n);
  for (size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument small and exact.
    const size_t k2 = (k * k) % (2 * n);
    const double ang = sign * kPi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
  for (size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
  fb[0] = std::conj(chirp[0]);
  for (size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
  fft_pow2(fa, -1);
  fft_pow2(fb, -1);
  for (size_t i = 0; i < m; ++i) fa[i] *= fb[i];
  fft_pow2(fa, +1);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t k = 0; k < n; ++k) a[k] = fa[k] * inv_m * chirp[k];
}

inline void fft_1d(std::vector<cplx>& a, int sign) {
  if (is_pow2(a.size()))
    fft_pow2(a, sign);
  else
    fft_bluestein(a, sign);
}

// 2-D transform, channels independent, scaled by 1/sqrt(HW) so that a
// forward/inverse pair is unitary in both directions.
inline Spectrum fft2_impl(const Spectrum& in, int sign) {
  Spectrum out = in;
  const int h = in.h, w = in.w, c = in.c;
  std::vector<cplx> row(w), col(h);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) row[x] = out.at(y, x, ch);
      fft_1d(row, sign);
      for (int x = 0; x < w; ++x) out.at(y, x, ch) = row[x];
    }
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) col[y] = out.at(y, x, ch);
      fft_1d(col, sign);
      for (int y = 0; y < h; ++y) out.at(y, x, ch) = col[y];
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (auto& z : out.data) z *= scale;
  return out;
}

}  // namespace detail

// Unitary 2-D DFT of a complex raster.
inline Spectrum fft2(const Spectrum& x) { return detail::fft2_impl(x, -1); }

// Unitary 2-D DFT of a real field. Output of a real input is
// Hermitian-symmetric: S(-f) = conj(S(f)).
inline Spectrum fft2(const Field& x) {
  Spectrum s(x.h, x.w, x.c);
  for (size_t i = 0; i < x.data.size(); ++i) s.data[i] = detail::cplx(x.data[i], 0.0);
  return detail::fft2_impl(s, -1);
}

// Unitary inverse 2-D DFT. The result is a complex raster; callers decide how
// to treat any residual imaginary part.
inline Spectrum ifft2(const Spectrum& s) { return detail::fft2_impl(s, +1); }

// i.i.d. complex Gaussian noise: real and imaginary parts of every bin are
// independent standard normals, so the expected per-bin energy is 2.
inline Spectrum sample_complex_gaussian(int h, int w, int c, Rng& rng) {
  Spectrum s(h, w, c);
  for (auto& z : s.data) {
    const double re = rng.normal();
    const double im = rng.normal();
    z = detail::cplx(re, im);
  }
  return s;
}

}  // namespace spectraldiff
