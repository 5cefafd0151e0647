#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectraldiff/core.hpp"
#include "spectraldiff/diffusion.hpp"
#include "spectraldiff/fft.hpp"
#include "spectraldiff/image_io.hpp"
#include "spectraldiff/mask.hpp"
#include "spectraldiff/rng.hpp"

namespace spectraldiff {

struct RainLayerSpec {
  MaskParams mask_params;
  double gain = 0.0;  // scale of the rectified streak field

  void validate() const {
    mask_params.validate();
    if (gain < 0.0) throw std::invalid_argument("rain layer: gain must be >= 0");
  }
};

// One rain layer: rectified real part of band-limited spectral noise,
// R = gain * max(0, Re(ifft2(M .* eps_f))), broadcast to C channels.
// Spatial streaks run orthogonally to the spectral sector angle.
inline Field synth_rain_layer(const RainLayerSpec& spec, int h, int w, int c, Rng& rng) {
  spec.validate();
  FrequencyGrid grid(h, w);
  auto mr = radial_mask(grid, spec.mask_params.r, spec.mask_params.sigma);
  auto mt = angular_mask(grid, spec.mask_params.theta, spec.mask_params.kappa);
  auto m = compose_and_normalize(mr, mt);
  std::vector<float> mask(m.begin(), m.end());

  Spectrum eps = sample_complex_gaussian(h, w, 1, rng);
  Field streaks = to_spatial_sample(apply_mask(mask, eps)).field;

  Field out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = spec.gain * std::max(0.0, streaks.at(y, x, 0));
      for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = v;
    }
  return out;
}

// O = clamp(B + sum_d R_d, 0, 1).
inline Field compose_rainy(const Field& clean, const std::vector<Field>& layers) {
  Field out = clean;
  for (const Field& r : layers) {
    require_same_shape(out, r, "compose_rainy");
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += r.data[i];
  }
  clamp01(out);
  return out;
}

namespace detail {

// Procedural clean images: oriented gradients, soft disks, checkers, and
// coarse blurred noise, mixed per channel. Keeps the repo dataset-free.
inline Field procedural_clean(int h, int w, int c, Rng& rng) {
  Field img(h, w, c);
  const int kind = rng.uniform_int(0, 2);
  const double cx = rng.uniform() * w, cy = rng.uniform() * h;
  const double ang = rng.uniform() * 2.0 * detail::kPi;
  const double dx = std::cos(ang), dy = std::sin(ang);
  const double lo = 0.15 + 0.2 * rng.uniform();
  const double hi = 0.65 + 0.3 * rng.uniform();

  if (kind == 0) {
    // Linear gradient plus a couple of soft disks.
    struct Disk {
      double x, y, rad, amp;
    };
    std::vector<Disk> disks;
    const int n_disks = rng.uniform_int(1, 3);
    for (int i = 0; i < n_disks; ++i)
      disks.push_back({rng.uniform() * w, rng.uniform() * h,
                       (0.1 + 0.15 * rng.uniform()) * std::min(h, w),
                       (rng.uniform() - 0.5) * 0.5});
    const double span = std::abs(dx) * w + std::abs(dy) * h + 1e-9;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double t = ((x - cx) * dx + (y - cy) * dy) / span + 0.5;
        double v = lo + (hi - lo) * std::clamp(t, 0.0, 1.0);
        for (const auto& d : disks) {
          const double dist2 = (x - d.x) * (x - d.x) + (y - d.y) * (y - d.y);
          v += d.amp * std::exp(-dist2 / (2.0 * d.rad * d.rad));
        }
        for (int ch = 0; ch < c; ++ch)
          img.at(y, x, ch) = std::clamp(v * (0.85 + 0.15 * ch / std::max(1, c - 1)), 0.0, 1.0);
      }
  } else if (kind == 1) {
    // Soft checkerboard.
    const double period = 4.0 + rng.uniform() * double(std::min(h, w)) / 3.0;
    const double phase_x = rng.uniform() * period, phase_y = rng.uniform() * period;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double sx = std::sin(2.0 * detail::kPi * (x + phase_x) / period);
        const double sy = std::sin(2.0 * detail::kPi * (y + phase_y) / period);
        const double v = lo + (hi - lo) * 0.5 * (1.0 + sx * sy);
        for (int ch = 0; ch < c; ++ch)
          img.at(y, x, ch) = std::clamp(v * (0.8 + 0.2 * (ch + 1.0) / std::max(1, c)), 0.0, 1.0);
      }
  } else {
    // Coarse noise, bilinearly upsampled: smooth blobs.
    const int gh = std::max(2, h / 8), gw = std::max(2, w / 8);
    std::vector<double> grid(size_t(gh) * gw);
    for (double& v : grid) v = lo + (hi - lo) * rng.uniform();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double gy = double(y) / h * (gh - 1), gx = double(x) / w * (gw - 1);
        const int y0 = int(gy), x0 = int(gx);
        const int y1 = std::min(y0 + 1, gh - 1), x1 = std::min(x0 + 1, gw - 1);
        const double fy = gy - y0, fx = gx - x0;
        const double v = grid[size_t(y0) * gw + x0] * (1 - fy) * (1 - fx) +
                         grid[size_t(y0) * gw + x1] * (1 - fy) * fx +
                         grid[size_t(y1) * gw + x0] * fy * (1 - fx) +
                         grid[size_t(y1) * gw + x1] * fy * fx;
        for (int ch = 0; ch < c; ++ch)
          img.at(y, x, ch) = std::clamp(v * (0.85 + 0.15 * ch / std::max(1, c - 1)), 0.0, 1.0);
      }
  }
  return img;
}

inline RainLayerSpec random_layer_spec(Rng& rng, double gain_lo, double gain_hi) {
  RainLayerSpec spec;
  spec.mask_params.r = 0.1 + 0.4 * rng.uniform();
  spec.mask_params.sigma = 0.05 + 0.15 * rng.uniform();
  spec.mask_params.theta = rng.uniform() * detail::kPi;
  spec.mask_params.kappa = 2.0 + 8.0 * rng.uniform();
  spec.gain = gain_lo + (gain_hi - gain_lo) * rng.uniform();
  return spec;
}

}  // namespace detail

struct DatasetManifest {
  int n_pairs = 0;
  int h = 0, w = 0;
  uint64_t seed = 0;
  struct Pair {
    std::string clean;
    std::string rainy;
    std::vector<RainLayerSpec> layers;
  };
  std::vector<Pair> pairs;
};

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["n_pairs"] = m.n_pairs;
  j["height"] = m.h;
  j["width"] = m.w;
  j["seed"] = m.seed;
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : m.pairs) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : p.layers)
      layers.push_back({{"r", l.mask_params.r},
                        {"sigma", l.mask_params.sigma},
                        {"theta", l.mask_params.theta},
                        {"kappa", l.mask_params.kappa},
                        {"gain", l.gain}});
    j["pairs"].push_back({{"clean", p.clean}, {"rainy", p.rainy}, {"layers", layers}});
  }
  std::ofstream f(path);
  if (!f) throw FormatError("cannot create " + path);
  f << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.n_pairs = j.at("n_pairs").get<int>();
    m.h = j.at("height").get<int>();
    m.w = j.at("width").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& p : j.at("pairs")) {
      DatasetManifest::Pair pair;
      pair.clean = p.at("clean").get<std::string>();
      pair.rainy = p.at("rainy").get<std::string>();
      for (const auto& l : p.at("layers")) {
        RainLayerSpec spec;
        spec.mask_params.r = l.at("r").get<double>();
        spec.mask_params.sigma = l.at("sigma").get<double>();
        spec.mask_params.theta = l.at("theta").get<double>();
        spec.mask_params.kappa = l.at("kappa").get<double>();
        spec.gain = l.at("gain").get<double>();
        pair.layers.push_back(spec);
      }
      m.pairs.push_back(std::move(pair));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return m;
}

// Generates n_pairs of procedural clean images with layered synthetic rain,
// written as paired PNGs plus a JSON manifest. Fully determined by seed.
inline DatasetManifest make_toy_dataset(int n_pairs, int h, int w, int min_layers, int max_layers,
                                        double gain_lo, double gain_hi, uint64_t seed,
                                        const std::string& out_dir) {
  if (n_pairs < 1) throw std::invalid_argument("make_toy_dataset: n_pairs must be >= 1");
  if (min_layers < 0 || max_layers < min_layers)
    throw std::invalid_argument("make_toy_dataset: bad layer count range");
  if (gain_lo < 0.0 || gain_hi < gain_lo)
    throw std::invalid_argument("make_toy_dataset: bad gain range");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "clean");
  fs::create_directories(fs::path(out_dir) / "rainy");

  DatasetManifest m;
  m.n_pairs = n_pairs;
  m.h = h;
  m.w = w;
  m.seed = seed;

  Rng base(seed);
  for (int i = 0; i < n_pairs; ++i) {
    Rng rng = base.derive(uint64_t(i));
    Field clean = detail::procedural_clean(h, w, 3, rng);

    DatasetManifest::Pair pair;
    const int n_layers = rng.uniform_int(min_layers, max_layers);
    std::vector<Field> layers;
    for (int l = 0; l < n_layers; ++l) {
      RainLayerSpec spec = detail::random_layer_spec(rng, gain_lo, gain_hi);
      pair.layers.push_back(spec);
      layers.push_back(synth_rain_layer(spec, h, w, 3, rng));
    }
    Field rainy = compose_rainy(clean, layers);

    char name[16];
    std::snprintf(name, sizeof(name), "%04d.png", i);
    pair.clean = (fs::path("clean") / name).string();
    pair.rainy = (fs::path("rainy") / name).string();
    save_png((fs::path(out_dir) / pair.clean).string(), clean);
    save_png((fs::path(out_dir) / pair.rainy).string(), rainy);
    m.pairs.push_back(std::move(pair));
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

}  // namespace spectraldiff
