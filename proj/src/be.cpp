#include "mars/be.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <variant>

#include "mars/nn.hpp"
#include "mars/rng.hpp"

namespace mars {

namespace {

double l2_norm(const double* p, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += p[i] * p[i];
  return std::sqrt(s);
}

}  // namespace

SpectralResult spectral_norm(const Tensor& m) {
  if (m.shape.size() != 2 || m.data.empty())
    throw std::invalid_argument("spectral_norm: expected nonempty rank-2 tensor");
  size_t rows = m.shape[0], cols = m.shape[1];
  const std::vector<double>& a = m.data;

  bool all_zero = true;
  for (double v : a)
    if (v != 0.0) {
      all_zero = false;
      break;
    }
  SpectralResult res;
  res.u.assign(rows, 0.0);
  res.v.assign(cols, 0.0);
  if (all_zero) return res;

  std::vector<double> v(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  std::vector<double> mv(rows, 0.0), w(cols, 0.0);
  bool restarted = false;
  for (int it = 0; it < 100000; ++it) {
    for (size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* row = a.data() + r * cols;
      for (size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
      mv[r] = acc;
    }
    double s = l2_norm(mv.data(), rows);
    if (s == 0.0) {
      // All-ones start landed in the null space of a nonzero matrix; restart
      // once from the basis vector of the heaviest column.
      if (restarted) break;
      restarted = true;
      size_t best = 0;
      double best_norm = -1.0;
      for (size_t c = 0; c < cols; ++c) {
        double cn = 0.0;
        for (size_t r = 0; r < rows; ++r) cn += a[r * cols + c] * a[r * cols + c];
        if (cn > best_norm) {
          best_norm = cn;
          best = c;
        }
      }
      std::fill(v.begin(), v.end(), 0.0);
      v[best] = 1.0;
      continue;
    }
    for (size_t r = 0; r < rows; ++r) res.u[r] = mv[r] / s;
    std::fill(w.begin(), w.end(), 0.0);
    for (size_t r = 0; r < rows; ++r) {
      const double* row = a.data() + r * cols;
      for (size_t c = 0; c < cols; ++c) w[c] += row[c] * res.u[r];
    }
    // ||M^T u - s v|| bounds |s - sigma| for a true singular value sigma; the
    // Rayleigh quotient only ascends, so a small residual means s sits at the
    // top of the spectrum rather than at a lower stall point.
    double residual_sq = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      double d = w[c] - s * v[c];
      residual_sq += d * d;
    }
    res.sigma = s;
    double wn = l2_norm(w.data(), cols);
    if (wn == 0.0) break;
    for (size_t c = 0; c < cols; ++c) v[c] = w[c] / wn;
    if (std::sqrt(residual_sq) <= 1e-9 * std::max(1.0, s)) break;
  }
  res.v = v;
  return res;
}

std::optional<std::vector<double>> layer_be(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::optional<std::vector<double>> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, DenseLayer>) {
          std::vector<double> be(l.out);
          for (size_t k = 0; k < l.out; ++k)
            be[k] = l2_norm(l.w.data() + k * l.in, l.in);
          return be;
        } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
          std::vector<double> be(l.out_ch);
          size_t per = l.in_ch * l.kh * l.kw;
          for (size_t k = 0; k < l.out_ch; ++k) {
            Tensor f;
            f.shape = {l.in_ch, l.kh * l.kw};
            f.data.assign(l.w.begin() + static_cast<long>(k * per),
                          l.w.begin() + static_cast<long>((k + 1) * per));
            be[k] = spectral_norm(f).sigma;
          }
          return be;
        } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
          std::vector<double> be(l.channels);
          for (size_t k = 0; k < l.channels; ++k)
            be[k] = std::abs(l.gamma[k]) / std::sqrt(l.running_var[k] + l.eps);
          return be;
        } else {
          return std::nullopt;
        }
      },
      layer);
}

namespace {

bool policy_admits(const Layer& layer, LayerPolicy policy) {
  bool is_dense = std::holds_alternative<DenseLayer>(layer);
  bool analyzable = is_dense || std::holds_alternative<Conv2DLayer>(layer) ||
                    std::holds_alternative<BatchNormLayer>(layer);
  if (!analyzable) return false;
  return policy == LayerPolicy::AllLayers || !is_dense;
}

BeLayerKind kind_of(const Layer& layer) {
  if (std::holds_alternative<DenseLayer>(layer)) return BeLayerKind::Dense;
  if (std::holds_alternative<Conv2DLayer>(layer)) return BeLayerKind::Conv;
  return BeLayerKind::BatchNorm;
}

}  // namespace

BEProfile model_be(const Model& m, LayerPolicy policy) {
  BEProfile p;
  for (size_t li = 0; li < m.layers.size(); ++li) {
    if (!policy_admits(m.layers[li], policy)) continue;
    p.per_layer.push_back(*layer_be(m.layers[li]));
    p.layer_kinds.push_back(kind_of(m.layers[li]));
    p.layer_indices.push_back(li);
  }
  if (p.per_layer.empty())
    throw std::runtime_error("model_be: no analyzable layer under the policy");
  return p;
}

BEProfile empirical_be(const Model& m, const Dataset& ds,
                       const TriggerSpec& spec, size_t sample_count,
                       uint64_t seed) {
  if (sample_count < 1)
    throw std::invalid_argument("empirical_be: sample_count >= 1");
  if (ds.size() == 0) throw std::invalid_argument("empirical_be: empty dataset");

  BEProfile p;
  for (size_t li = 0; li < m.layers.size(); ++li) {
    if (!policy_admits(m.layers[li], LayerPolicy::AllLayers)) continue;
    p.layer_kinds.push_back(kind_of(m.layers[li]));
    p.layer_indices.push_back(li);
  }
  if (p.layer_indices.empty())
    throw std::runtime_error("empirical_be: no analyzable layer");

  size_t count = std::min(sample_count, ds.size());
  Rng rng(seed);
  std::vector<size_t> chosen = rng.sample_without_replacement(ds.size(), count);

  p.per_layer.assign(p.layer_indices.size(), {});
  bool first = true;
  for (size_t si : chosen) {
    std::vector<Tensor> clean_out, trig_out;
    forward(m, ds.images[si], &clean_out);
    forward(m, apply_trigger(ds.images[si], spec), &trig_out);
    for (size_t pi = 0; pi < p.layer_indices.size(); ++pi) {
      const Tensor& a = clean_out[p.layer_indices[pi]];
      const Tensor& b = trig_out[p.layer_indices[pi]];
      size_t units = a.shape[0];  // neurons for {D}, channels for {C,H,W}
      size_t per = a.size() / units;
      if (first) p.per_layer[pi].assign(units, 0.0);
      for (size_t k = 0; k < units; ++k) {
        double s = 0.0;
        for (size_t j = 0; j < per; ++j) {
          double d = a.data[k * per + j] - b.data[k * per + j];
          s += d * d;
        }
        p.per_layer[pi][k] += std::sqrt(s);
      }
    }
    first = false;
  }
  for (std::vector<double>& layer : p.per_layer)
    for (double& v : layer) v /= static_cast<double>(count);
  return p;
}

BEProfile be_upper_bound(const Model& m, const Dataset& ds,
                         const TriggerSpec& spec) {
  if (ds.size() == 0)
    throw std::invalid_argument("be_upper_bound: empty dataset");
  double mean_dist = 0.0;
  for (const Tensor& img : ds.images) {
    Tensor trig = apply_trigger(img, spec);
    double s = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) {
      double d = img.data[i] - trig.data[i];
      s += d * d;
    }
    mean_dist += std::sqrt(s);
  }
  mean_dist /= static_cast<double>(ds.size());

  BEProfile p;
  double lip_prefix = 1.0;  // product of full-layer Lipschitz constants so far
  for (size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& layer = m.layers[li];
    if (const DenseLayer* d = std::get_if<DenseLayer>(&layer)) {
      std::vector<double> bounds(d->out);
      for (size_t k = 0; k < d->out; ++k)
        bounds[k] = l2_norm(d->w.data() + k * d->in, d->in) * lip_prefix *
                    mean_dist;
      p.per_layer.push_back(std::move(bounds));
      p.layer_kinds.push_back(BeLayerKind::Dense);
      p.layer_indices.push_back(li);
      Tensor wm;
      wm.shape = {d->out, d->in};
      wm.data = d->w;
      lip_prefix *= spectral_norm(wm).sigma;
    } else if (std::holds_alternative<ReluLayer>(layer) ||
               std::holds_alternative<FlattenLayer>(layer)) {
      // 1-Lipschitz, no bound entries of their own.
    } else {
      throw std::runtime_error(
          "be_upper_bound: only Dense/ReLU/Flatten stacks are supported");
    }
  }
  if (p.per_layer.empty())
    throw std::runtime_error("be_upper_bound: no Dense layer in model");
  return p;
}

CBEVector cbe(const BEProfile& profile, double kappa) {
  if (!(kappa > 0.0) || kappa > 100.0)
    throw std::invalid_argument("cbe: kappa in (0, 100]");
  CBEVector out;
  out.kappa = kappa;
  for (const std::vector<double>& layer : profile.per_layer) {
    double exact = kappa * static_cast<double>(layer.size()) / 100.0;
    size_t count = static_cast<size_t>(std::ceil(exact - 1e-9));
    count = std::max<size_t>(1, std::min(count, layer.size()));
    std::vector<double> sorted = layer;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    out.values.insert(out.values.end(), sorted.begin(),
                      sorted.begin() + static_cast<long>(count));
  }
  return out;
}

}  // namespace mars
