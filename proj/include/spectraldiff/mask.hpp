#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "spectraldiff/binio.hpp"
#include "spectraldiff/core.hpp"
#include "spectraldiff/rng.hpp"

namespace spectraldiff {

// Generating parameters of one frequency mask: dominant radius r_d and radial
// bandwidth sigma_r (as fractions of the unit frequency square, so r spans
// [0, ~0.707] with the axis Nyquist at 0.5), dominant orientation theta_d in
// [0, pi), and angular concentration kappa_d.
struct MaskParams {
  double r = 0.0;
  double sigma = 0.0;
  double theta = 0.0;
  double kappa = 0.0;

  void validate() const {
    if (!(r > 0.0 && r <= 0.5 * std::sqrt(2.0)))
      throw std::invalid_argument("MaskParams: r must lie in (0, 0.5*sqrt(2)]");
    if (!(sigma > 0.0)) throw std::invalid_argument("MaskParams: sigma must be > 0");
    if (!(kappa > 0.0)) throw std::invalid_argument("MaskParams: kappa must be > 0");
  }
};

// Per-bin polar coordinates of the H x W frequency plane, DC at (0,0).
// theta is undefined at DC; it is pinned to 0 there.
struct FrequencyGrid {
  int h = 0, w = 0;
  std::vector<double> r;      // sqrt(fx^2 + fy^2)
  std::vector<double> theta;  // atan2(fy, fx), in (-pi, pi]

  FrequencyGrid(int h_, int w_) : h(h_), w(w_), r(size_t(h_) * w_), theta(size_t(h_) * w_) {
    for (int y = 0; y < h; ++y) {
      const double fy = fft_freq(y, h);
      for (int x = 0; x < w; ++x) {
        const double fx = fft_freq(x, w);
        const size_t i = size_t(y) * w + x;
        r[i] = std::sqrt(fx * fx + fy * fy);
        theta[i] = (fx == 0.0 && fy == 0.0) ? 0.0 : std::atan2(fy, fx);
      }
    }
  }
};

// Gaussian band-pass in radius: exp(-(r - r_d)^2 / (2 sigma^2)).
inline std::vector<double> radial_mask(const FrequencyGrid& g, double r_d, double sigma_r) {
  if (!(sigma_r > 0.0)) throw std::invalid_argument("radial_mask: sigma_r must be > 0");
  std::vector<double> m(g.r.size());
  const double inv = 1.0 / (2.0 * sigma_r * sigma_r);
  for (size_t i = 0; i < m.size(); ++i) {
    const double d = g.r[i] - r_d;
    m[i] = std::exp(-d * d * inv);
  }
  return m;
}

// von Mises angular profile: exp(kappa * cos(theta - theta_d)).
inline std::vector<double> angular_mask(const FrequencyGrid& g, double theta_d, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("angular_mask: kappa must be > 0");
  std::vector<double> m(g.theta.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = std::exp(kappa * std::cos(g.theta[i] - theta_d));
  return m;
}

// M = sqrt(Mr .* Mtheta) normalized to unit squared sum.
inline std::vector<double> compose_and_normalize(const std::vector<double>& mr,
                                                 const std::vector<double>& mtheta) {
  if (mr.size() != mtheta.size())
    throw std::invalid_argument("compose_and_normalize: shape mismatch");
  std::vector<double> m(mr.size());
  double sum_sq = 0.0;
  for (size_t i = 0; i < m.size(); ++i) {
    m[i] = std::sqrt(mr[i] * mtheta[i]);
    sum_sq += m[i] * m[i];
  }
  if (!(sum_sq > 0.0))
    throw std::invalid_argument("compose_and_normalize: degenerate all-zero mask");
  const double inv = 1.0 / std::sqrt(sum_sq);
  for (double& v : m) v *= inv;
  return m;
}

enum class MaskOrder { Lexicographic, Shuffled };

// Parameter grid enumerated into one mask per (r, sigma, kappa, theta) tuple,
// theta innermost.
struct GridSpec {
  std::vector<double> r_values;
  std::vector<double> sigma_values;
  std::vector<double> theta_values;  // radians
  std::vector<double> kappa_values;
  MaskOrder order = MaskOrder::Lexicographic;
  uint64_t shuffle_seed = 0;

  size_t count() const {
    return r_values.size() * sigma_values.size() * theta_values.size() * kappa_values.size();
  }

  // Reference grid: r in {0.1, 0.3, 0.5}, sigma in {0.05, 0.2}, theta every
  // 3 degrees in [0, 180), kappa in {2, 5, 10} -> 1080 masks.
  static GridSpec reference() {
    GridSpec g;
    g.r_values = {0.1, 0.3, 0.5};
    g.sigma_values = {0.05, 0.2};
    for (int i = 0; i < 60; ++i) g.theta_values.push_back(i * 3.0 * detail::kPi / 180.0);
    g.kappa_values = {2.0, 5.0, 10.0};
    return g;
  }

  // Reduced grid for desk-scale runs; theta stays dense so step weighting by
  // direction remains meaningful. 1*1*60*2 = 120 masks by default.
  static GridSpec toy(int theta_count = 60, std::vector<double> kappas = {5.0, 10.0}) {
    GridSpec g;
    g.r_values = {0.3};
    g.sigma_values = {0.1};
    for (int i = 0; i < theta_count; ++i)
      g.theta_values.push_back(i * detail::kPi / theta_count);
    g.kappa_values = std::move(kappas);
    return g;
  }
};

// Ordered masks M_1..M_D for one resolution, with their parameters. Mask
// values are stored as f32, matching the on-disk format exactly, so a
// save/load round trip is bit-exact. Immutable after construction.
struct MaskBank {
  int h = 0, w = 0;
  std::vector<MaskParams> params;
  std::vector<std::vector<float>> masks;  // row-major H*W each, sum of squares 1

  size_t size() const { return masks.size(); }

  // Steps are 1-based: step d uses masks[d-1].
  const std::vector<float>& mask_for_step(int d) const {
    if (d < 1 || d > static_cast<int>(masks.size()))
      throw std::invalid_argument("MaskBank: step " + std::to_string(d) + " out of range 1.." +
                                  std::to_string(masks.size()));
    return masks[size_t(d) - 1];
  }
  const MaskParams& params_for_step(int d) const {
    mask_for_step(d);
    return params[size_t(d) - 1];
  }
};

inline MaskBank build_bank(int h, int w, const GridSpec& spec) {
  if (spec.r_values.empty() || spec.sigma_values.empty() || spec.theta_values.empty() ||
      spec.kappa_values.empty())
    throw std::invalid_argument("build_bank: empty grid dimension");
  const FrequencyGrid grid(h, w);
  MaskBank bank;
  bank.h = h;
  bank.w = w;
  bank.params.reserve(spec.count());
  bank.masks.reserve(spec.count());
  for (double r : spec.r_values)
    for (double sigma : spec.sigma_values)
      for (double kappa : spec.kappa_values)
        for (double theta : spec.theta_values) {
          MaskParams p{r, sigma, theta, kappa};
          p.validate();
          const auto m = compose_and_normalize(radial_mask(grid, r, sigma),
                                               angular_mask(grid, theta, kappa));
          std::vector<float> mf(m.size());
          for (size_t i = 0; i < m.size(); ++i) mf[i] = static_cast<float>(m[i]);
          bank.params.push_back(p);
          bank.masks.push_back(std::move(mf));
        }
  if (spec.order == MaskOrder::Shuffled) {
    std::vector<size_t> perm(bank.size());
    std::iota(perm.begin(), perm.end(), size_t(0));
    Rng rng(spec.shuffle_seed);
    for (size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    MaskBank shuffled;
    shuffled.h = h;
    shuffled.w = w;
    for (size_t i : perm) {
      shuffled.params.push_back(bank.params[i]);
      shuffled.masks.push_back(std::move(bank.masks[i]));
    }
    return shuffled;
  }
  return bank;
}

// Bank file: magic "SDMB", version u32=1, D u32, H u32, W u32, then D records
// of 4 f64 params (r, sigma, theta, kappa) followed by H*W f32 mask values.
inline void save_bank(const MaskBank& bank, const std::string& path) {
  binio::require_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_bank: cannot open " + path);
  os.write("SDMB", 4);
  binio::write_pod<uint32_t>(os, 1);
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(bank.size()));
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(bank.h));
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(bank.w));
  for (size_t d = 0; d < bank.size(); ++d) {
    const MaskParams& p = bank.params[d];
    binio::write_pod<double>(os, p.r);
    binio::write_pod<double>(os, p.sigma);
    binio::write_pod<double>(os, p.theta);
    binio::write_pod<double>(os, p.kappa);
    binio::write_array(os, bank.masks[d].data(), bank.masks[d].size());
  }
  if (!os) throw std::runtime_error("save_bank: write failed for " + path);
}

inline MaskBank load_bank(const std::string& path) {
  binio::require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_bank: cannot open " + path);
  binio::expect_magic(is, "SDMB", "mask bank");
  const auto version = binio::read_pod<uint32_t>(is, "version");
  if (version != 1) throw FormatError("load_bank: unsupported version " + std::to_string(version));
  const auto d_count = binio::read_pod<uint32_t>(is, "mask count");
  const auto h = binio::read_pod<uint32_t>(is, "height");
  const auto w = binio::read_pod<uint32_t>(is, "width");
  if (h < 1 || w < 1 || d_count < 1 || size_t(h) * w > (1u << 28))
    throw FormatError("load_bank: implausible header");
  MaskBank bank;
  bank.h = static_cast<int>(h);
  bank.w = static_cast<int>(w);
  for (uint32_t d = 0; d < d_count; ++d) {
    MaskParams p;
    p.r = binio::read_pod<double>(is, "mask params");
    p.sigma = binio::read_pod<double>(is, "mask params");
    p.theta = binio::read_pod<double>(is, "mask params");
    p.kappa = binio::read_pod<double>(is, "mask params");
    std::vector<float> m(size_t(h) * w);
    binio::read_array(is, m.data(), m.size(), "mask values");
    bank.params.push_back(p);
    bank.masks.push_back(std::move(m));
  }
  // Declared count must match payload exactly: no trailing bytes allowed.
  char extra;
  is.read(&extra, 1);
  if (is.gcount() != 0) throw FormatError("load_bank: trailing bytes after declared payload");
  return bank;
}

}  // namespace spectraldiff
