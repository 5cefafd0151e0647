#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spectraldiff/core.hpp"
#include "spectraldiff/image_io.hpp"
#include "spectraldiff/rng.hpp"

namespace spectraldiff {

// Paired clean/rainy image paths, ordered by filename.
struct PairedDataset {
  std::string root;
  std::vector<std::pair<std::string, std::string>> pairs;  // (clean, rainy), absolute

  size_t size() const { return pairs.size(); }
};

// Pairs files by identical name under dir/clean and dir/rainy. An orphan on
// either side is an error naming the file.
inline PairedDataset load_paired_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path clean_dir = fs::path(dir) / "clean";
  const fs::path rainy_dir = fs::path(dir) / "rainy";
  if (!fs::is_directory(clean_dir) || !fs::is_directory(rainy_dir))
    throw FormatError(dir + ": expected clean/ and rainy/ subdirectories");

  auto names_of = [](const fs::path& p) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
  };
  const auto clean_names = names_of(clean_dir);
  const auto rainy_names = names_of(rainy_dir);

  for (const auto& n : clean_names)
    if (!std::binary_search(rainy_names.begin(), rainy_names.end(), n))
      throw FormatError("unpaired file: clean/" + n + " has no rainy counterpart");
  for (const auto& n : rainy_names)
    if (!std::binary_search(clean_names.begin(), clean_names.end(), n))
      throw FormatError("unpaired file: rainy/" + n + " has no clean counterpart");

  PairedDataset ds;
  ds.root = dir;
  for (const auto& n : clean_names)
    ds.pairs.emplace_back((clean_dir / n).string(), (rainy_dir / n).string());
  return ds;
}

// Identical random crop applied to both images (training images may be larger
// than the mask-bank resolution the model was built for).
inline std::pair<Field, Field> paired_random_crop(const Field& clean, const Field& rainy, int ch,
                                                  int cw, Rng& rng) {
  require_same_shape(clean, rainy, "paired_random_crop");
  if (ch > clean.h || cw > clean.w)
    throw std::invalid_argument("paired_random_crop: crop larger than image");
  const int oy = clean.h == ch ? 0 : rng.uniform_int(0, clean.h - ch);
  const int ox = clean.w == cw ? 0 : rng.uniform_int(0, clean.w - cw);
  Field a(ch, cw, clean.c), b(ch, cw, clean.c);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int k = 0; k < clean.c; ++k) {
        a.at(y, x, k) = clean.at(oy + y, ox + x, k);
        b.at(y, x, k) = rainy.at(oy + y, ox + x, k);
      }
  return {std::move(a), std::move(b)};
}

}  // namespace spectraldiff
