#pragma once

#include <optional>
#include <vector>

#include "mars/data.hpp"
#include "mars/model.hpp"
#include "mars/tensor.hpp"

namespace mars {

struct SpectralResult {
  double sigma = 0.0;
  std::vector<double> u;  // length rows
  std::vector<double> v;  // length cols
};

/// Largest singular value of a rank-2 tensor via power iteration from an
/// all-ones normalized start, stopping once the singular-pair residual
/// ||M^T u - sigma v|| drops below 1e-9 * max(1, sigma). Returns the top
/// singular pair along with sigma; an all-zero matrix yields sigma 0 and
/// zero vectors.
SpectralResult spectral_norm(const Tensor& m);

enum class BeLayerKind { Dense, Conv, BatchNorm };

enum class LayerPolicy { ConvBnOnly, AllLayers };

/// Per-neuron backdoor energy for every analyzable layer the policy admits.
/// layer_indices maps each profile entry back to its position in the model.
struct BEProfile {
  std::vector<std::vector<double>> per_layer;
  std::vector<BeLayerKind> layer_kinds;
  std::vector<size_t> layer_indices;
};

/// Layer-wise backdoor energy: Dense neuron k -> ||row_k||_2; Conv channel k
/// -> spectral norm of filter k reshaped to (in_channels) x (kh*kw);
/// BatchNorm channel k -> |gamma_k| / sqrt(running_var_k + eps).
/// Non-parametric layers are not analyzable and return nullopt.
std::optional<std::vector<double>> layer_be(const Layer& layer);

/// Applies layer_be across the model under the policy. Throws if the policy
/// admits no analyzable layer.
BEProfile model_be(const Model& m, LayerPolicy policy = LayerPolicy::ConvBnOnly);

/// Measured backdoor energy: mean over seeded samples of the per-neuron
/// activation gap between x and its triggered copy (absolute difference for
/// Dense neurons, L2 over the channel map for Conv/BatchNorm channels).
/// Covers every analyzable layer; sample_count is capped at the dataset size
/// and samples are drawn without replacement.
BEProfile empirical_be(const Model& m, const Dataset& ds,
                       const TriggerSpec& spec, size_t sample_count,
                       uint64_t seed);

/// Lipschitz upper bound on the measured backdoor energy for Dense/ReLU
/// (plus Flatten) stacks: bound_k at layer l = ||row_k||_2 times the product
/// of the full-layer Lipschitz constants of all preceding layers times the
/// dataset-mean trigger displacement ||x - delta(x)||_2. Throws on any other
/// layer kind.
BEProfile be_upper_bound(const Model& m, const Dataset& ds,
                         const TriggerSpec& spec);

struct CBEVector {
  std::vector<double> values;
  double kappa = 0.0;
};

/// Concatenated backdoor energy: per layer the max(1, ceil(kappa% * n_l))
/// largest BE values sorted descending, concatenated in layer order.
CBEVector cbe(const BEProfile& profile, double kappa);

}  // namespace mars
