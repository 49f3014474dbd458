#pragma once

#include <string>
#include <vector>

#include "mars/layers.hpp"
#include "mars/rng.hpp"

namespace mars {

/// An ordered layer stack ending in a length-num_classes logit vector.
struct Model {
  std::vector<Layer> layers;
  int num_classes = 0;
};

/// Mutable view over one parameter tensor inside a model.
struct ParamRef {
  double* data = nullptr;
  size_t size = 0;
};

/// Trainable parameters in layer order (Dense w,b; Conv w,b; BN gamma,beta).
std::vector<ParamRef> trainable_params(Model& m);

/// Trainable parameters plus BatchNorm running statistics: the full state a
/// client uploads and the server aggregates.
std::vector<ParamRef> state_params(Model& m);

std::vector<double> flatten_state(const Model& m);
void load_state(Model& m, const std::vector<double>& flat);
size_t state_size(const Model& m);

/// Flatten / Dense(->64) / ReLU / Dense(->num_classes).
Model make_mlp_small(size_t input_size, int num_classes, Rng& rng);

/// Conv(in->8,3x3,pad 1) / BN / ReLU / AvgPool 2 /
/// Conv(8->16,3x3,pad 1) / BN / ReLU / AvgPool 2 / Flatten / Dense.
Model make_cnn_small(size_t in_ch, size_t h, size_t w, int num_classes,
                     Rng& rng);

/// Builds "mlp-small" or "cnn-small" for the given input geometry.
Model make_model(const std::string& arch, size_t in_ch, size_t h, size_t w,
                 int num_classes, Rng& rng);

DenseLayer make_dense(size_t in, size_t out, Rng& rng);
Conv2DLayer make_conv(size_t in_ch, size_t out_ch, size_t kh, size_t kw,
                      size_t stride, size_t pad, Rng& rng);
BatchNormLayer make_batchnorm(size_t channels);

}  // namespace mars
