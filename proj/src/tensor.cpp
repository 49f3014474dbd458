#include "mars/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace mars {

size_t numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<size_t> s) {
  size_t n = numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace mars
