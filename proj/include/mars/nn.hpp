#pragma once

#include <vector>

#include "mars/model.hpp"
#include "mars/tensor.hpp"

namespace mars {

/// Gradient buffers aligned one-to-one with trainable_params(model).
using Grads = std::vector<std::vector<double>>;

Grads zero_grads(Model& m);

/// Inference-mode batched forward (BatchNorm uses running statistics).
/// input is {N,C,H,W} or {N,D}; returns logits {N,c}. When layer_outputs is
/// non-null it receives every layer's batched output in order.
Tensor forward(const Model& m, const Tensor& input,
               std::vector<Tensor>* layer_outputs = nullptr);

/// Training-mode forward plus exact backward of the mean cross-entropy.
/// Updates BatchNorm running statistics as a side effect of the forward.
/// Fills grads (aligned with trainable_params) and returns the mean loss.
double backward_ce(Model& m, const Tensor& inputs,
                   const std::vector<int>& labels, Grads& grads);

/// theta <- theta - lr * grad on every trainable parameter.
void sgd_step(Model& m, const Grads& grads, double lr);

std::vector<double> softmax(const std::vector<double>& logits);

/// Argmax class per sample, ties broken toward the lower class index.
std::vector<int> predict(const Model& m, const std::vector<Tensor>& images);

/// Fraction of samples whose predicted class equals the label.
double evaluate(const Model& m, const std::vector<Tensor>& images,
                const std::vector<int>& labels);

/// Stacks per-sample tensors images[idx[0..n)] into one {N,...} batch.
Tensor stack_batch(const std::vector<Tensor>& images,
                   const std::vector<size_t>& idx);

}  // namespace mars
