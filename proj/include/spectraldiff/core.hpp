#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectraldiff {

namespace detail {
inline constexpr double kPi = 3.141592653589793238462643383279502884;
}

// Real-valued raster indexed (y, x, channel), interleaved channels.
// Image-valued fields live in [0,1]; noise/residual fields are unbounded.
struct Field {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;

  Field() = default;
  Field(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {
    if (h_ < 1 || w_ < 1 || (c_ != 1 && c_ != 3))
      throw std::invalid_argument("Field: bad shape " + std::to_string(h_) + "x" +
                                  std::to_string(w_) + "x" + std::to_string(c_));
  }

  double& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
  double at(int y, int x, int ch) const { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Field& o) const { return h == o.h && w == o.w && c == o.c; }
};

// Complex-valued frequency raster, same indexing as the Field it transforms.
// DC sits at index (0,0); per-axis frequencies are k/N folded into [-0.5, 0.5).
struct Spectrum {
  int h = 0, w = 0, c = 0;
  std::vector<std::complex<double>> data;

  Spectrum() = default;
  Spectrum(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_) {
    if (h_ < 1 || w_ < 1 || c_ < 1)
      throw std::invalid_argument("Spectrum: bad shape");
  }

  std::complex<double>& at(int y, int x, int ch) {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  const std::complex<double>& at(int y, int x, int ch) const {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Spectrum& o) const { return h == o.h && w == o.w && c == o.c; }
};

inline double norm2(const Field& f) {
  double s = 0.0;
  for (double v : f.data) s += v * v;
  return std::sqrt(s);
}

inline double norm2(const Spectrum& s) {
  double acc = 0.0;
  for (const auto& z : s.data) acc += std::norm(z);
  return std::sqrt(acc);
}

inline double energy(const Field& f) {
  double s = 0.0;
  for (double v : f.data) s += v * v;
  return s;
}

inline double energy(const Spectrum& s) {
  double acc = 0.0;
  for (const auto& z : s.data) acc += std::norm(z);
  return acc;
}

inline void require_same_shape(const Field& a, const Field& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

inline void require_same_shape(const Spectrum& a, const Spectrum& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

inline void clamp01(Field& f) {
  for (double& v : f.data) v = std::clamp(v, 0.0, 1.0);
}

// Normalized DFT frequency for index k of an N-point axis, in [-0.5, 0.5).
inline double fft_freq(int k, int n) {
  return (2 * k < n) ? static_cast<double>(k) / n : static_cast<double>(k - n) / n;
}

// File-format error (bad magic, truncation, inconsistent header).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spectraldiff
