#pragma once

#include <cstddef>
#include <vector>

namespace mars {

/// Dense row-major value tensor. Activations and pixel intensities live here;
/// shapes are {C,H,W} for images and {D} for flat feature vectors.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<size_t> s);

  size_t size() const { return data.size(); }
  bool all_finite() const;
};

size_t numel(const std::vector<size_t>& shape);

}  // namespace mars
