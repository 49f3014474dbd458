#include "mars/attacks.hpp"

#include <cmath>
#include <stdexcept>
#include <variant>

namespace mars {

void train_sgd(Model& m, const Dataset& data, int epochs, double lr,
               size_t batch_size, Rng& rng) {
  if (data.size() == 0) throw std::invalid_argument("train_sgd: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("train_sgd: batch_size >= 1");
  for (int e = 0; e < epochs; ++e) {
    std::vector<size_t> order = rng.permutation(data.size());
    for (size_t start = 0; start < order.size(); start += batch_size) {
      size_t end = std::min(order.size(), start + batch_size);
      std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                              order.begin() + static_cast<long>(end));
      Tensor batch = stack_batch(data.images, idx);
      std::vector<int> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];
      Grads grads = zero_grads(m);
      backward_ce(m, batch, labels, grads);
      sgd_step(m, grads, lr);
    }
  }
}

double be_regularizer_grad(Model& m, LayerPolicy policy, Grads& grads) {
  grads = zero_grads(m);
  double total = 0.0;
  size_t slot = 0;
  for (const Layer& layer : m.layers) {
    if (const DenseLayer* d = std::get_if<DenseLayer>(&layer)) {
      if (policy == LayerPolicy::AllLayers) {
        for (size_t k = 0; k < d->out; ++k) {
          const double* row = d->w.data() + k * d->in;
          double norm = 0.0;
          for (size_t i = 0; i < d->in; ++i) norm += row[i] * row[i];
          norm = std::sqrt(norm);
          total += norm;
          if (norm > 0.0)
            for (size_t i = 0; i < d->in; ++i)
              grads[slot][k * d->in + i] = row[i] / norm;
        }
      }
      slot += 2;
    } else if (const Conv2DLayer* c = std::get_if<Conv2DLayer>(&layer)) {
      size_t per = c->in_ch * c->kh * c->kw;
      size_t cols = c->kh * c->kw;
      for (size_t k = 0; k < c->out_ch; ++k) {
        Tensor f;
        f.shape = {c->in_ch, cols};
        f.data.assign(c->w.begin() + static_cast<long>(k * per),
                      c->w.begin() + static_cast<long>((k + 1) * per));
        SpectralResult sr = spectral_norm(f);
        total += sr.sigma;
        if (sr.sigma > 0.0)
          for (size_t ci = 0; ci < c->in_ch; ++ci)
            for (size_t j = 0; j < cols; ++j)
              grads[slot][k * per + ci * cols + j] = sr.u[ci] * sr.v[j];
      }
      slot += 2;
    } else if (const BatchNormLayer* bn = std::get_if<BatchNormLayer>(&layer)) {
      for (size_t k = 0; k < bn->channels; ++k) {
        double inv_sigma = 1.0 / std::sqrt(bn->running_var[k] + bn->eps);
        total += std::abs(bn->gamma[k]) * inv_sigma;
        double sgn =
            bn->gamma[k] > 0.0 ? 1.0 : (bn->gamma[k] < 0.0 ? -1.0 : 0.0);
        grads[slot][k] = sgn * inv_sigma;
      }
      slot += 2;
    }
  }
  return total;
}

namespace {

bool layer_attacked(const Layer& layer, size_t conv_ordinal,
                    const AttackConfig& cfg) {
  switch (cfg.attacked_layers) {
    case AttackedLayers::All: return true;
    case AttackedLayers::FcOnly: return std::holds_alternative<DenseLayer>(layer);
    case AttackedLayers::FirstKConvsPlusFc:
      if (std::holds_alternative<DenseLayer>(layer)) return true;
      if (std::holds_alternative<Conv2DLayer>(layer))
        return conv_ordinal < static_cast<size_t>(cfg.first_k_convs);
      return false;
  }
  return true;
}

// Replacement scaling: global + gamma * (trained - global) over the trainable
// parameters only; running statistics pass through from the trained model so
// BatchNorm variances stay >= 0.
Model scale_update(const Model& global, Model& trained, double gamma) {
  Model scaled = global;
  std::vector<ParamRef> gp = trainable_params(scaled);
  std::vector<ParamRef> tp = trainable_params(trained);
  for (size_t i = 0; i < gp.size(); ++i)
    for (size_t j = 0; j < gp[i].size; ++j)
      gp[i].data[j] += gamma * (tp[i].data[j] - gp[i].data[j]);
  for (size_t li = 0; li < scaled.layers.size(); ++li) {
    BatchNormLayer* dst = std::get_if<BatchNormLayer>(&scaled.layers[li]);
    if (!dst) continue;
    const BatchNormLayer& src = std::get<BatchNormLayer>(trained.layers[li]);
    dst->running_mean = src.running_mean;
    dst->running_var = src.running_var;
  }
  return scaled;
}

void train_adaptive(Model& m, const Dataset& data, double lambda, int epochs,
                    double lr, size_t batch_size, Rng& rng) {
  for (int e = 0; e < epochs; ++e) {
    std::vector<size_t> order = rng.permutation(data.size());
    for (size_t start = 0; start < order.size(); start += batch_size) {
      size_t end = std::min(order.size(), start + batch_size);
      std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                              order.begin() + static_cast<long>(end));
      Tensor batch = stack_batch(data.images, idx);
      std::vector<int> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];
      Grads grads = zero_grads(m);
      backward_ce(m, batch, labels, grads);
      if (lambda != 0.0) {
        Grads be_grads;
        be_regularizer_grad(m, LayerPolicy::AllLayers, be_grads);
        for (size_t i = 0; i < grads.size(); ++i)
          for (size_t j = 0; j < grads[i].size(); ++j)
            grads[i][j] += lambda * be_grads[i][j];
      }
      sgd_step(m, grads, lr);
    }
  }
}

}  // namespace

LocalUpdate attacker_local_train(const Model& global, const Dataset& local_data,
                                 const AttackConfig& cfg,
                                 const TrainHyper& hyper, int client_id) {
  if (cfg.kind == AttackKind::None)
    throw std::invalid_argument("attacker_local_train: kind must not be none");

  uint64_t poison_seed = derive_seed(hyper.seed, 1, 0);
  Rng train_rng(derive_seed(hyper.seed, 2, 0));

  Model trained = global;
  if (cfg.kind == AttackKind::Mra || cfg.kind == AttackKind::AdaptiveBe) {
    Dataset poisoned =
        poison_dataset(local_data, cfg.trigger, cfg.poison_fraction, poison_seed);
    if (cfg.kind == AttackKind::Mra)
      train_sgd(trained, poisoned, hyper.epochs, hyper.lr, hyper.batch_size,
                train_rng);
    else
      train_adaptive(trained, poisoned, cfg.lambda, hyper.epochs, hyper.lr,
                     hyper.batch_size, train_rng);
    // Both attacks end with the replacement step: the adaptive variant only
    // swaps the training objective, the amplification arithmetic is the same.
    double gamma = cfg.scale_auto
                       ? static_cast<double>(hyper.clients_per_round) /
                             static_cast<double>(hyper.attackers_per_round)
                       : cfg.scale_factor;
    if (!(gamma > 0.0))
      throw std::invalid_argument("attacker_local_train: scale_factor > 0");
    trained = scale_update(global, trained, gamma);
  } else {  // LabelFlip
    Dataset flipped = local_data;
    for (int& y : flipped.labels) y = (y + 1) % flipped.num_classes;
    train_sgd(trained, flipped, hyper.epochs, hyper.lr, hyper.batch_size,
              train_rng);
  }

  size_t conv_ordinal = 0;
  for (size_t li = 0; li < trained.layers.size(); ++li) {
    bool is_conv = std::holds_alternative<Conv2DLayer>(global.layers[li]);
    if (!layer_attacked(global.layers[li], conv_ordinal, cfg))
      trained.layers[li] = global.layers[li];
    if (is_conv) ++conv_ordinal;
  }

  LocalUpdate up;
  up.client_id = client_id;
  up.params = flatten_state(trained);
  return up;
}

}  // namespace mars
