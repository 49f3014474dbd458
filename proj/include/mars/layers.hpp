#pragma once

#include <cstddef>
#include <variant>
#include <vector>

namespace mars {

/// Fully connected layer. Weights are out x in, row-major: row k holds the
/// incoming weights of output neuron k.
struct DenseLayer {
  size_t in = 0, out = 0;
  std::vector<double> w;  // out*in
  std::vector<double> b;  // out
};

/// 2-D convolution over {C,H,W} inputs. Filter layout is
/// out_ch x in_ch x kh x kw, row-major.
struct Conv2DLayer {
  size_t in_ch = 0, out_ch = 0, kh = 0, kw = 0;
  size_t stride = 1, pad = 0;
  std::vector<double> w;  // out_ch*in_ch*kh*kw
  std::vector<double> b;  // out_ch
};

/// Per-channel batch normalization. Training mode normalizes with batch
/// statistics and folds them into the running averages; inference mode uses
/// the running statistics only.
struct BatchNormLayer {
  size_t channels = 0;
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct ReluLayer {};

/// Non-overlapping average pooling with a square window (stride = window).
struct AvgPoolLayer {
  size_t window = 2;
};

struct FlattenLayer {};

using Layer = std::variant<DenseLayer, Conv2DLayer, BatchNormLayer, ReluLayer,
                           AvgPoolLayer, FlattenLayer>;

}  // namespace mars
