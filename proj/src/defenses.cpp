#include "mars/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <variant>

namespace mars {

namespace {

void check_updates(const std::vector<LocalUpdate>& updates) {
  if (updates.empty())
    throw std::invalid_argument("defense: no updates to aggregate");
  for (const LocalUpdate& u : updates)
    if (u.params.size() != updates[0].params.size())
      throw std::invalid_argument("defense: update parameter size mismatch");
}

std::vector<double> mean_params(const std::vector<LocalUpdate>& updates,
                                const std::vector<size_t>& which) {
  std::vector<double> mean(updates[0].params.size(), 0.0);
  for (size_t i : which)
    for (size_t j = 0; j < mean.size(); ++j) mean[j] += updates[i].params[j];
  for (double& v : mean) v /= static_cast<double>(which.size());
  return mean;
}

std::vector<size_t> all_indices(size_t n) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  return idx;
}

}  // namespace

DefenseOutcome fed_avg(const std::vector<LocalUpdate>& updates) {
  check_updates(updates);
  DefenseOutcome out;
  out.global_parameters = mean_params(updates, all_indices(updates.size()));
  for (const LocalUpdate& u : updates) out.selected_ids.push_back(u.client_id);
  return out;
}

DefenseOutcome mars(const std::vector<LocalUpdate>& updates, const Model& arch,
                    const MarsParams& params) {
  check_updates(updates);
  DefenseOutcome out;
  if (updates.size() < 2) {
    out.global_parameters = updates[0].params;
    out.selected_ids.push_back(updates[0].client_id);
    out.diagnostics.notes.push_back(
        "single update: pass-through, nothing to cluster");
    return out;
  }

  Model scratch = arch;
  for (const LocalUpdate& u : updates) {
    load_state(scratch, u.params);
    out.diagnostics.cbes.push_back(
        cbe(model_be(scratch, params.policy), params.kappa));
  }

  out.diagnostics.cluster = k_wmeans(out.diagnostics.cbes, params.metric);
  out.diagnostics.has_cluster = true;
  std::vector<size_t> kept =
      params.selection == MarsSelection::CenterNorm
          ? select_clusters(out.diagnostics.cluster, params.epsilon)
          : majority_select(out.diagnostics.cluster);

  out.global_parameters = mean_params(updates, kept);
  for (size_t i : kept) out.selected_ids.push_back(updates[i].client_id);
  return out;
}

DefenseOutcome multi_krum(const std::vector<LocalUpdate>& updates, size_t f,
                          size_t m) {
  check_updates(updates);
  size_t n = updates.size();
  if (n < f + 3)
    throw std::invalid_argument("multi_krum: need n - f - 2 >= 1");
  if (m < 1 || m > n)
    throw std::invalid_argument("multi_krum: m in [1, n]");
  size_t neighbors = n - f - 2;

  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < updates[i].params.size(); ++k) {
        double d = updates[i].params[k] - updates[j].params[k];
        s += d * d;
      }
      d2[i][j] = d2[j][i] = s;
    }

  DefenseOutcome out;
  out.diagnostics.scores.resize(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> dists;
    dists.reserve(n - 1);
    for (size_t j = 0; j < n; ++j)
      if (j != i) dists.push_back(d2[i][j]);
    std::sort(dists.begin(), dists.end());
    out.diagnostics.scores[i] =
        std::accumulate(dists.begin(),
                        dists.begin() + static_cast<long>(neighbors), 0.0);
  }

  std::vector<size_t> order = all_indices(n);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return out.diagnostics.scores[a] < out.diagnostics.scores[b];
  });
  std::vector<size_t> kept(order.begin(), order.begin() + static_cast<long>(m));
  std::sort(kept.begin(), kept.end());

  out.global_parameters = mean_params(updates, kept);
  for (size_t i : kept) out.selected_ids.push_back(updates[i].client_id);
  return out;
}

DefenseOutcome norm_clip(const std::vector<LocalUpdate>& updates, double bound,
                         const std::vector<double>& previous_global) {
  check_updates(updates);
  if (!(bound > 0.0)) throw std::invalid_argument("norm_clip: bound > 0");
  if (previous_global.size() != updates[0].params.size())
    throw std::invalid_argument("norm_clip: previous_global size mismatch");

  size_t p = previous_global.size();
  std::vector<double> mean_delta(p, 0.0);
  for (const LocalUpdate& u : updates) {
    double norm = 0.0;
    for (size_t j = 0; j < p; ++j) {
      double d = u.params[j] - previous_global[j];
      norm += d * d;
    }
    norm = std::sqrt(norm);
    double scale = norm > bound ? bound / norm : 1.0;
    for (size_t j = 0; j < p; ++j)
      mean_delta[j] += scale * (u.params[j] - previous_global[j]);
  }
  DefenseOutcome out;
  out.global_parameters.resize(p);
  for (size_t j = 0; j < p; ++j)
    out.global_parameters[j] =
        previous_global[j] + mean_delta[j] / static_cast<double>(updates.size());
  for (const LocalUpdate& u : updates) out.selected_ids.push_back(u.client_id);
  return out;
}

namespace {

// Zeroes the outgoing parameters of one channel of an analyzable layer.
void prune_channel(Layer& layer, size_t k) {
  if (DenseLayer* d = std::get_if<DenseLayer>(&layer)) {
    std::fill(d->w.begin() + static_cast<long>(k * d->in),
              d->w.begin() + static_cast<long>((k + 1) * d->in), 0.0);
    d->b[k] = 0.0;
  } else if (Conv2DLayer* c = std::get_if<Conv2DLayer>(&layer)) {
    size_t per = c->in_ch * c->kh * c->kw;
    std::fill(c->w.begin() + static_cast<long>(k * per),
              c->w.begin() + static_cast<long>((k + 1) * per), 0.0);
    c->b[k] = 0.0;
  } else if (BatchNormLayer* bn = std::get_if<BatchNormLayer>(&layer)) {
    bn->gamma[k] = 0.0;
    bn->beta[k] = 0.0;
  }
}

}  // namespace

DefenseOutcome fed_clp(const std::vector<LocalUpdate>& updates,
                       const Model& arch, double u) {
  check_updates(updates);
  if (!(u > 0.0)) throw std::invalid_argument("fed_clp: threshold u > 0");

  std::vector<LocalUpdate> pruned = updates;
  Model scratch = arch;
  for (LocalUpdate& up : pruned) {
    load_state(scratch, up.params);
    BEProfile profile = model_be(scratch, LayerPolicy::ConvBnOnly);
    for (size_t pi = 0; pi < profile.per_layer.size(); ++pi) {
      const std::vector<double>& be = profile.per_layer[pi];
      double mean = std::accumulate(be.begin(), be.end(), 0.0) /
                    static_cast<double>(be.size());
      double var = 0.0;
      for (double v : be) var += (v - mean) * (v - mean);
      var /= static_cast<double>(be.size());
      double threshold = mean + u * std::sqrt(var);
      for (size_t k = 0; k < be.size(); ++k)
        if (be[k] > threshold)
          prune_channel(scratch.layers[profile.layer_indices[pi]], k);
    }
    up.params = flatten_state(scratch);
  }
  DefenseOutcome out = fed_avg(pruned);
  out.diagnostics.notes.push_back("fed_clp prunes channels, never clients");
  return out;
}

}  // namespace mars
