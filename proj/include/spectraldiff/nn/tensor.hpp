#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectraldiff {

// Dense tensor templated on scalar type: float for training speed, double
// for finite-difference gradient verification.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}

  static size_t numel(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d < 1) throw std::invalid_argument("Tensor: nonpositive dimension");
      n *= size_t(d);
    }
    return n;
  }

  size_t size() const { return data.size(); }
  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // Feature-map accessors for (C, H, W) tensors.
  int c() const { return shape.at(0); }
  int h() const { return shape.at(1); }
  int w() const { return shape.at(2); }
  T& at(int ch, int y, int x) { return data[(size_t(ch) * shape[1] + y) * shape[2] + x]; }
  const T& at(int ch, int y, int x) const {
    return data[(size_t(ch) * shape[1] + y) * shape[2] + x];
  }
};

}  // namespace spectraldiff
