#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mars/be.hpp"
#include "mars/data.hpp"
#include "mars/model.hpp"
#include "mars/nn.hpp"

namespace mars {

enum class AttackKind { None, Mra, AdaptiveBe, LabelFlip };

enum class AttackedLayers { All, FcOnly, FirstKConvsPlusFc };

struct AttackConfig {
  AttackKind kind = AttackKind::None;
  TriggerSpec trigger;
  double poison_fraction = 0.5;
  bool scale_auto = true;     // gamma = clients/attackers per round
  double scale_factor = 1.0;  // replacement scale, used when !scale_auto
  double lambda = 0.0;        // adaptive_be only
  AttackedLayers attacked_layers = AttackedLayers::All;
  int first_k_convs = 1;      // FirstKConvsPlusFc only
};

/// Shared local-training knobs; the seed drives minibatch shuffling and the
/// poison-subset choice for this client.
struct TrainHyper {
  int epochs = 2;
  double lr = 0.05;
  size_t batch_size = 32;
  uint64_t seed = 0;
  size_t clients_per_round = 20;    // for the "auto" replacement scale
  size_t attackers_per_round = 4;
};

/// One client's uploaded state for a round. Ground truth about who was
/// malicious lives in the harness, never here, so defenses cannot cheat.
struct LocalUpdate {
  int client_id = 0;
  std::vector<double> params;  // flatten_state order
};

/// Plain SGD over shuffled minibatches; mutates the model in place.
void train_sgd(Model& m, const Dataset& data, int epochs, double lr,
               size_t batch_size, Rng& rng);

/// Gradient of the summed backdoor energy w.r.t. the trainable parameters
/// (aligned with trainable_params): Dense row k contributes w_k/||w_k||_2,
/// a Conv channel contributes its top singular pair u v^T reshaped back, a
/// BatchNorm channel contributes sign(gamma_k)/sqrt(running_var_k + eps) on
/// gamma_k. Zero rows/filters/gammas contribute zero (subgradient choice).
/// Returns the scalar summed BE.
double be_regularizer_grad(Model& m, LayerPolicy policy, Grads& grads);

/// Malicious local training. mra: train on the poisoned shard. adaptive_be:
/// SGD on cross-entropy + lambda * summed BE over the poisoned shard. Both
/// then return global + gamma * (trained - global) on the trainable
/// parameters (BatchNorm running statistics pass through unscaled so
/// variances stay nonnegative); the adaptive variant only swaps the training
/// objective. label_flip: train with labels mapped k -> (k+1) mod c,
/// unscaled. Layers outside cfg.attacked_layers are reset bit-identically to
/// the global model before return.
LocalUpdate attacker_local_train(const Model& global, const Dataset& local_data,
                                 const AttackConfig& cfg,
                                 const TrainHyper& hyper, int client_id);

}  // namespace mars
