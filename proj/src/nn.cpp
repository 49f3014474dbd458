#include "mars/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <variant>

namespace mars {

namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct Dims {
  size_t n = 0, c = 0, h = 0, w = 0;
  bool spatial = false;  // true for {N,C,H,W}, false for {N,D} (c = D)
};

Dims dims_of(const Tensor& t) {
  Dims d;
  check(t.shape.size() == 2 || t.shape.size() == 4,
        "forward: batch tensor must be rank 2 or rank 4");
  d.n = t.shape[0];
  d.c = t.shape[1];
  if (t.shape.size() == 4) {
    d.h = t.shape[2];
    d.w = t.shape[3];
    d.spatial = true;
  }
  return d;
}

Tensor dense_fwd(const DenseLayer& l, const Tensor& x) {
  Dims d = dims_of(x);
  check(!d.spatial, "Dense: expected flat {N,D} input (missing Flatten?)");
  check(d.c == l.in, "Dense: input width mismatch");
  Tensor y = Tensor::zeros({d.n, l.out});
  for (size_t n = 0; n < d.n; ++n) {
    const double* xr = x.data.data() + n * l.in;
    double* yr = y.data.data() + n * l.out;
    for (size_t o = 0; o < l.out; ++o) {
      const double* wr = l.w.data() + o * l.in;
      double acc = l.b[o];
      for (size_t i = 0; i < l.in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

void dense_bwd(const DenseLayer& l, const Tensor& x, const Tensor& dy,
               Tensor& dx, std::vector<double>& dw, std::vector<double>& db) {
  size_t n_batch = x.shape[0];
  dx = Tensor::zeros(x.shape);
  for (size_t n = 0; n < n_batch; ++n) {
    const double* xr = x.data.data() + n * l.in;
    const double* dyr = dy.data.data() + n * l.out;
    double* dxr = dx.data.data() + n * l.in;
    for (size_t o = 0; o < l.out; ++o) {
      double g = dyr[o];
      db[o] += g;
      const double* wr = l.w.data() + o * l.in;
      double* dwr = dw.data() + o * l.in;
      for (size_t i = 0; i < l.in; ++i) {
        dwr[i] += g * xr[i];
        dxr[i] += g * wr[i];
      }
    }
  }
}

size_t conv_out_dim(size_t in, size_t k, size_t stride, size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

Tensor conv_fwd(const Conv2DLayer& l, const Tensor& x) {
  Dims d = dims_of(x);
  check(d.spatial, "Conv2D: expected {N,C,H,W} input");
  check(d.c == l.in_ch, "Conv2D: channel count mismatch");
  check(d.h + 2 * l.pad >= l.kh && d.w + 2 * l.pad >= l.kw,
        "Conv2D: kernel larger than padded input");
  size_t ho = conv_out_dim(d.h, l.kh, l.stride, l.pad);
  size_t wo = conv_out_dim(d.w, l.kw, l.stride, l.pad);
  Tensor y = Tensor::zeros({d.n, l.out_ch, ho, wo});
  for (size_t n = 0; n < d.n; ++n) {
    for (size_t o = 0; o < l.out_ch; ++o) {
      double* yp = y.data.data() + ((n * l.out_ch + o) * ho) * wo;
      for (size_t oy = 0; oy < ho; ++oy) {
        for (size_t ox = 0; ox < wo; ++ox) {
          double acc = l.b[o];
          for (size_t ci = 0; ci < l.in_ch; ++ci) {
            const double* xp = x.data.data() + ((n * d.c + ci) * d.h) * d.w;
            const double* wp =
                l.w.data() + ((o * l.in_ch + ci) * l.kh) * l.kw;
            for (size_t ky = 0; ky < l.kh; ++ky) {
              long iy = static_cast<long>(oy * l.stride + ky) -
                        static_cast<long>(l.pad);
              if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
              for (size_t kx = 0; kx < l.kw; ++kx) {
                long ix = static_cast<long>(ox * l.stride + kx) -
                          static_cast<long>(l.pad);
                if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                acc += wp[ky * l.kw + kx] * xp[iy * d.w + ix];
              }
            }
          }
          yp[oy * wo + ox] = acc;
        }
      }
    }
  }
  return y;
}

void conv_bwd(const Conv2DLayer& l, const Tensor& x, const Tensor& dy,
              Tensor& dx, std::vector<double>& dw, std::vector<double>& db) {
  Dims d = dims_of(x);
  size_t ho = dy.shape[2], wo = dy.shape[3];
  dx = Tensor::zeros(x.shape);
  for (size_t n = 0; n < d.n; ++n) {
    for (size_t o = 0; o < l.out_ch; ++o) {
      const double* dyp = dy.data.data() + ((n * l.out_ch + o) * ho) * wo;
      for (size_t oy = 0; oy < ho; ++oy) {
        for (size_t ox = 0; ox < wo; ++ox) {
          double g = dyp[oy * wo + ox];
          if (g == 0.0) continue;
          db[o] += g;
          for (size_t ci = 0; ci < l.in_ch; ++ci) {
            const double* xp = x.data.data() + ((n * d.c + ci) * d.h) * d.w;
            double* dxp = dx.data.data() + ((n * d.c + ci) * d.h) * d.w;
            const double* wp =
                l.w.data() + ((o * l.in_ch + ci) * l.kh) * l.kw;
            double* dwp = dw.data() + ((o * l.in_ch + ci) * l.kh) * l.kw;
            for (size_t ky = 0; ky < l.kh; ++ky) {
              long iy = static_cast<long>(oy * l.stride + ky) -
                        static_cast<long>(l.pad);
              if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
              for (size_t kx = 0; kx < l.kw; ++kx) {
                long ix = static_cast<long>(ox * l.stride + kx) -
                          static_cast<long>(l.pad);
                if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                dwp[ky * l.kw + kx] += g * xp[iy * d.w + ix];
                dxp[iy * d.w + ix] += g * wp[ky * l.kw + kx];
              }
            }
          }
        }
      }
    }
  }
}

struct BnCache {
  std::vector<double> inv_std;  // per channel, 1/sqrt(var+eps)
  Tensor xhat;
};

// Training-mode BatchNorm: normalizes with biased batch statistics and folds
// them into the running averages (unbiased variance, matching the usual
// framework convention; falls back to biased when the batch has one element).
Tensor bn_fwd_train(BatchNormLayer& l, const Tensor& x, BnCache& cache) {
  Dims d = dims_of(x);
  check(d.c == l.channels, "BatchNorm: channel count mismatch");
  size_t spatial = d.spatial ? d.h * d.w : 1;
  size_t m = d.n * spatial;
  check(m >= 1, "BatchNorm: empty batch");
  Tensor y = Tensor::zeros(x.shape);
  cache.inv_std.assign(l.channels, 0.0);
  cache.xhat = Tensor::zeros(x.shape);
  for (size_t c = 0; c < l.channels; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (size_t n = 0; n < d.n; ++n) {
      const double* xp = x.data.data() + (n * d.c + c) * spatial;
      for (size_t s = 0; s < spatial; ++s) {
        sum += xp[s];
        sumsq += xp[s] * xp[s];
      }
    }
    double mu = sum / static_cast<double>(m);
    double var = sumsq / static_cast<double>(m) - mu * mu;
    if (var < 0.0) var = 0.0;  // guard against catastrophic cancellation
    double inv_std = 1.0 / std::sqrt(var + l.eps);
    cache.inv_std[c] = inv_std;
    for (size_t n = 0; n < d.n; ++n) {
      const double* xp = x.data.data() + (n * d.c + c) * spatial;
      double* hp = cache.xhat.data.data() + (n * d.c + c) * spatial;
      double* yp = y.data.data() + (n * d.c + c) * spatial;
      for (size_t s = 0; s < spatial; ++s) {
        hp[s] = (xp[s] - mu) * inv_std;
        yp[s] = l.gamma[c] * hp[s] + l.beta[c];
      }
    }
    double var_running =
        m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
    l.running_mean[c] = (1.0 - l.momentum) * l.running_mean[c] + l.momentum * mu;
    l.running_var[c] =
        (1.0 - l.momentum) * l.running_var[c] + l.momentum * var_running;
  }
  return y;
}

Tensor bn_fwd_eval(const BatchNormLayer& l, const Tensor& x) {
  Dims d = dims_of(x);
  check(d.c == l.channels, "BatchNorm: channel count mismatch");
  size_t spatial = d.spatial ? d.h * d.w : 1;
  Tensor y = Tensor::zeros(x.shape);
  for (size_t c = 0; c < l.channels; ++c) {
    double inv_std = 1.0 / std::sqrt(l.running_var[c] + l.eps);
    double scale = l.gamma[c] * inv_std;
    double shift = l.beta[c] - l.running_mean[c] * scale;
    for (size_t n = 0; n < d.n; ++n) {
      const double* xp = x.data.data() + (n * d.c + c) * spatial;
      double* yp = y.data.data() + (n * d.c + c) * spatial;
      for (size_t s = 0; s < spatial; ++s) yp[s] = scale * xp[s] + shift;
    }
  }
  return y;
}

// Backward through the batch statistics:
// dx = inv_std * (g*dy - mean(g*dy) - xhat * mean(g*dy*xhat)), g = gamma.
void bn_bwd(const BatchNormLayer& l, const BnCache& cache, const Tensor& dy,
            Tensor& dx, std::vector<double>& dgamma,
            std::vector<double>& dbeta) {
  Dims d = dims_of(dy);
  size_t spatial = d.spatial ? d.h * d.w : 1;
  double m = static_cast<double>(d.n * spatial);
  dx = Tensor::zeros(dy.shape);
  for (size_t c = 0; c < l.channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (size_t n = 0; n < d.n; ++n) {
      const double* dyp = dy.data.data() + (n * d.c + c) * spatial;
      const double* hp = cache.xhat.data.data() + (n * d.c + c) * spatial;
      for (size_t s = 0; s < spatial; ++s) {
        sum_dy += dyp[s];
        sum_dy_xhat += dyp[s] * hp[s];
      }
    }
    dbeta[c] += sum_dy;
    dgamma[c] += sum_dy_xhat;
    double mean_dy = sum_dy / m;
    double mean_dy_xhat = sum_dy_xhat / m;
    double scale = l.gamma[c] * cache.inv_std[c];
    for (size_t n = 0; n < d.n; ++n) {
      const double* dyp = dy.data.data() + (n * d.c + c) * spatial;
      const double* hp = cache.xhat.data.data() + (n * d.c + c) * spatial;
      double* dxp = dx.data.data() + (n * d.c + c) * spatial;
      for (size_t s = 0; s < spatial; ++s)
        dxp[s] = scale * (dyp[s] - mean_dy - hp[s] * mean_dy_xhat);
    }
  }
}

Tensor relu_fwd(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx) {
  dx = Tensor::zeros(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i)
    dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
}

Tensor avgpool_fwd(const AvgPoolLayer& l, const Tensor& x) {
  Dims d = dims_of(x);
  check(d.spatial, "AvgPool: expected {N,C,H,W} input");
  check(l.window >= 1, "AvgPool: window must be >= 1");
  size_t ho = d.h / l.window, wo = d.w / l.window;
  check(ho >= 1 && wo >= 1, "AvgPool: window larger than input");
  Tensor y = Tensor::zeros({d.n, d.c, ho, wo});
  double inv = 1.0 / static_cast<double>(l.window * l.window);
  for (size_t n = 0; n < d.n; ++n)
    for (size_t c = 0; c < d.c; ++c) {
      const double* xp = x.data.data() + (n * d.c + c) * d.h * d.w;
      double* yp = y.data.data() + (n * d.c + c) * ho * wo;
      for (size_t oy = 0; oy < ho; ++oy)
        for (size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (size_t ky = 0; ky < l.window; ++ky)
            for (size_t kx = 0; kx < l.window; ++kx)
              acc += xp[(oy * l.window + ky) * d.w + (ox * l.window + kx)];
          yp[oy * wo + ox] = acc * inv;
        }
    }
  return y;
}

void avgpool_bwd(const AvgPoolLayer& l, const Tensor& x, const Tensor& dy,
                 Tensor& dx) {
  Dims d = dims_of(x);
  size_t ho = dy.shape[2], wo = dy.shape[3];
  dx = Tensor::zeros(x.shape);
  double inv = 1.0 / static_cast<double>(l.window * l.window);
  for (size_t n = 0; n < d.n; ++n)
    for (size_t c = 0; c < d.c; ++c) {
      double* dxp = dx.data.data() + (n * d.c + c) * d.h * d.w;
      const double* dyp = dy.data.data() + (n * d.c + c) * ho * wo;
      for (size_t oy = 0; oy < ho; ++oy)
        for (size_t ox = 0; ox < wo; ++ox) {
          double g = dyp[oy * wo + ox] * inv;
          for (size_t ky = 0; ky < l.window; ++ky)
            for (size_t kx = 0; kx < l.window; ++kx)
              dxp[(oy * l.window + ky) * d.w + (ox * l.window + kx)] += g;
        }
    }
}

Tensor flatten_fwd(const Tensor& x) {
  check(x.shape.size() >= 2, "Flatten: expected batched input");
  size_t n = x.shape[0];
  size_t rest = 1;
  for (size_t i = 1; i < x.shape.size(); ++i) rest *= x.shape[i];
  Tensor y = x;
  y.shape = {n, rest};
  return y;
}

Tensor batchify(const Tensor& input, bool& was_single) {
  was_single = input.shape.size() == 1 || input.shape.size() == 3;
  if (!was_single) return input;
  Tensor b = input;
  b.shape.insert(b.shape.begin(), 1);
  return b;
}

}  // namespace

Tensor forward(const Model& m, const Tensor& input,
               std::vector<Tensor>* layer_outputs) {
  check(input.size() == input.data.size(), "forward: shape/data mismatch");
  bool was_single = false;
  Tensor cur = batchify(input, was_single);
  if (layer_outputs) layer_outputs->clear();
  for (const Layer& layer : m.layers) {
    cur = std::visit(
        [&](const auto& l) -> Tensor {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer>) return dense_fwd(l, cur);
          else if constexpr (std::is_same_v<T, Conv2DLayer>) return conv_fwd(l, cur);
          else if constexpr (std::is_same_v<T, BatchNormLayer>) return bn_fwd_eval(l, cur);
          else if constexpr (std::is_same_v<T, ReluLayer>) return relu_fwd(cur);
          else if constexpr (std::is_same_v<T, AvgPoolLayer>) return avgpool_fwd(l, cur);
          else return flatten_fwd(cur);
        },
        layer);
    if (layer_outputs) layer_outputs->push_back(cur);
  }
  check(cur.shape.size() == 2 &&
            cur.shape[1] == static_cast<size_t>(m.num_classes),
        "forward: model does not end in a length-c logit vector");
  if (was_single) {
    cur.shape = {cur.shape[1]};
    if (layer_outputs)
      for (Tensor& t : *layer_outputs) t.shape.erase(t.shape.begin());
  }
  return cur;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Grads zero_grads(Model& m) {
  Grads g;
  for (const ParamRef& r : trainable_params(m)) g.emplace_back(r.size, 0.0);
  return g;
}

double backward_ce(Model& m, const Tensor& inputs,
                   const std::vector<int>& labels, Grads& grads) {
  check(!labels.empty(), "backward_ce: empty batch");
  check(inputs.shape.size() >= 2 && inputs.shape[0] == labels.size(),
        "backward_ce: batch size mismatch between inputs and labels");
  for (int y : labels)
    check(y >= 0 && y < m.num_classes, "backward_ce: label out of range");

  size_t n_batch = labels.size();
  size_t n_layers = m.layers.size();

  // Forward in training mode, caching every layer boundary.
  std::vector<Tensor> acts(n_layers + 1);
  std::vector<BnCache> bn_cache(n_layers);
  acts[0] = inputs;
  for (size_t li = 0; li < n_layers; ++li) {
    acts[li + 1] = std::visit(
        [&](auto& l) -> Tensor {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer>)
            return dense_fwd(l, acts[li]);
          else if constexpr (std::is_same_v<T, Conv2DLayer>)
            return conv_fwd(l, acts[li]);
          else if constexpr (std::is_same_v<T, BatchNormLayer>)
            return bn_fwd_train(l, acts[li], bn_cache[li]);
          else if constexpr (std::is_same_v<T, ReluLayer>)
            return relu_fwd(acts[li]);
          else if constexpr (std::is_same_v<T, AvgPoolLayer>)
            return avgpool_fwd(l, acts[li]);
          else
            return flatten_fwd(acts[li]);
        },
        m.layers[li]);
  }
  const Tensor& logits = acts[n_layers];
  check(logits.shape.size() == 2 &&
            logits.shape[1] == static_cast<size_t>(m.num_classes),
        "backward_ce: model does not end in a length-c logit vector");

  // Mean cross-entropy and dL/dlogits.
  size_t c = static_cast<size_t>(m.num_classes);
  Tensor dlogits = Tensor::zeros(logits.shape);
  double loss = 0.0;
  for (size_t n = 0; n < n_batch; ++n) {
    const double* z = logits.data.data() + n * c;
    double mx = z[0];
    for (size_t k = 1; k < c; ++k) mx = std::max(mx, z[k]);
    double sum = 0.0;
    for (size_t k = 0; k < c; ++k) sum += std::exp(z[k] - mx);
    double logz = mx + std::log(sum);
    loss += logz - z[static_cast<size_t>(labels[n])];
    double* dz = dlogits.data.data() + n * c;
    for (size_t k = 0; k < c; ++k)
      dz[k] = std::exp(z[k] - logz) / static_cast<double>(n_batch);
    dz[static_cast<size_t>(labels[n])] -= 1.0 / static_cast<double>(n_batch);
  }
  loss /= static_cast<double>(n_batch);

  if (grads.empty()) grads = zero_grads(m);
  // Per-layer gradient slot offsets into the trainable_params order.
  std::vector<size_t> slot(n_layers, 0);
  {
    size_t k = 0;
    for (size_t li = 0; li < n_layers; ++li) {
      slot[li] = k;
      std::visit(
          [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer> ||
                          std::is_same_v<T, Conv2DLayer> ||
                          std::is_same_v<T, BatchNormLayer>)
              k += 2;
          },
          m.layers[li]);
    }
    check(k == grads.size(), "backward_ce: grads not aligned with model");
  }

  Tensor dcur = dlogits;
  for (size_t li = n_layers; li-- > 0;) {
    Tensor dprev;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer>) {
            dense_bwd(l, acts[li], dcur, dprev, grads[slot[li]],
                      grads[slot[li] + 1]);
          } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
            conv_bwd(l, acts[li], dcur, dprev, grads[slot[li]],
                     grads[slot[li] + 1]);
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            bn_bwd(l, bn_cache[li], dcur, dprev, grads[slot[li]],
                   grads[slot[li] + 1]);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            relu_bwd(acts[li], dcur, dprev);
          } else if constexpr (std::is_same_v<T, AvgPoolLayer>) {
            avgpool_bwd(l, acts[li], dcur, dprev);
          } else {
            dprev = dcur;
            dprev.shape = acts[li].shape;
          }
        },
        m.layers[li]);
    dcur = std::move(dprev);
  }
  return loss;
}

void sgd_step(Model& m, const Grads& grads, double lr) {
  check(lr >= 0.0, "sgd_step: lr must be non-negative");
  std::vector<ParamRef> params = trainable_params(m);
  check(params.size() == grads.size(), "sgd_step: grads/model mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    check(params[i].size == grads[i].size(), "sgd_step: grad shape mismatch");
    for (size_t j = 0; j < params[i].size; ++j)
      params[i].data[j] -= lr * grads[i][j];
  }
}

std::vector<int> predict(const Model& m, const std::vector<Tensor>& images) {
  std::vector<int> preds;
  preds.reserve(images.size());
  // Chunked batches keep peak activation memory small on large eval sets.
  const size_t chunk = 256;
  for (size_t start = 0; start < images.size(); start += chunk) {
    size_t end = std::min(images.size(), start + chunk);
    std::vector<size_t> idx(end - start);
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Tensor batch = stack_batch(images, idx);
    Tensor logits = forward(m, batch);
    size_t c = logits.shape[1];
    for (size_t n = 0; n < idx.size(); ++n) {
      const double* z = logits.data.data() + n * c;
      int best = 0;
      for (size_t k = 1; k < c; ++k)
        if (z[k] > z[static_cast<size_t>(best)]) best = static_cast<int>(k);
      preds.push_back(best);
    }
  }
  return preds;
}

double evaluate(const Model& m, const std::vector<Tensor>& images,
                const std::vector<int>& labels) {
  check(!images.empty() && images.size() == labels.size(),
        "evaluate: dataset empty or images/labels mismatch");
  std::vector<int> preds = predict(m, images);
  size_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

Tensor stack_batch(const std::vector<Tensor>& images,
                   const std::vector<size_t>& idx) {
  check(!idx.empty(), "stack_batch: empty index list");
  const Tensor& first = images.at(idx[0]);
  std::vector<size_t> shape;
  shape.push_back(idx.size());
  shape.insert(shape.end(), first.shape.begin(), first.shape.end());
  Tensor out = Tensor::zeros(shape);
  size_t per = first.size();
  for (size_t i = 0; i < idx.size(); ++i) {
    const Tensor& img = images.at(idx[i]);
    check(img.shape == first.shape, "stack_batch: inhomogeneous shapes");
    std::copy(img.data.begin(), img.data.end(), out.data.begin() + i * per);
  }
  return out;
}

}  // namespace mars
