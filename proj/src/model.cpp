#include "mars/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <variant>

namespace mars {

DenseLayer make_dense(size_t in, size_t out, Rng& rng) {
  DenseLayer d;
  d.in = in;
  d.out = out;
  d.w.resize(in * out);
  d.b.assign(out, 0.0);
  double bound = std::sqrt(6.0 / static_cast<double>(in));
  for (double& v : d.w) v = rng.uniform(-bound, bound);
  return d;
}

Conv2DLayer make_conv(size_t in_ch, size_t out_ch, size_t kh, size_t kw,
                      size_t stride, size_t pad, Rng& rng) {
  Conv2DLayer c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kh = kh;
  c.kw = kw;
  c.stride = stride;
  c.pad = pad;
  c.w.resize(out_ch * in_ch * kh * kw);
  c.b.assign(out_ch, 0.0);
  double fan_in = static_cast<double>(in_ch * kh * kw);
  double bound = std::sqrt(6.0 / fan_in);
  for (double& v : c.w) v = rng.uniform(-bound, bound);
  return c;
}

BatchNormLayer make_batchnorm(size_t channels) {
  BatchNormLayer bn;
  bn.channels = channels;
  bn.gamma.assign(channels, 1.0);
  bn.beta.assign(channels, 0.0);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

Model make_mlp_small(size_t input_size, int num_classes, Rng& rng) {
  Model m;
  m.num_classes = num_classes;
  m.layers.emplace_back(FlattenLayer{});
  m.layers.emplace_back(make_dense(input_size, 64, rng));
  m.layers.emplace_back(ReluLayer{});
  m.layers.emplace_back(make_dense(64, static_cast<size_t>(num_classes), rng));
  return m;
}

Model make_cnn_small(size_t in_ch, size_t h, size_t w, int num_classes,
                     Rng& rng) {
  Model m;
  m.num_classes = num_classes;
  m.layers.emplace_back(make_conv(in_ch, 8, 3, 3, 1, 1, rng));
  m.layers.emplace_back(make_batchnorm(8));
  m.layers.emplace_back(ReluLayer{});
  m.layers.emplace_back(AvgPoolLayer{2});
  m.layers.emplace_back(make_conv(8, 16, 3, 3, 1, 1, rng));
  m.layers.emplace_back(make_batchnorm(16));
  m.layers.emplace_back(ReluLayer{});
  m.layers.emplace_back(AvgPoolLayer{2});
  m.layers.emplace_back(FlattenLayer{});
  size_t flat = 16 * (h / 4) * (w / 4);
  m.layers.emplace_back(make_dense(flat, static_cast<size_t>(num_classes), rng));
  return m;
}

Model make_model(const std::string& arch, size_t in_ch, size_t h, size_t w,
                 int num_classes, Rng& rng) {
  if (arch == "mlp-small") return make_mlp_small(in_ch * h * w, num_classes, rng);
  if (arch == "cnn-small") return make_cnn_small(in_ch, h, w, num_classes, rng);
  throw std::invalid_argument("unknown architecture: " + arch);
}

std::vector<ParamRef> trainable_params(Model& m) {
  std::vector<ParamRef> refs;
  for (Layer& layer : m.layers) {
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer> ||
                        std::is_same_v<T, Conv2DLayer>) {
            refs.push_back({l.w.data(), l.w.size()});
            refs.push_back({l.b.data(), l.b.size()});
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            refs.push_back({l.gamma.data(), l.gamma.size()});
            refs.push_back({l.beta.data(), l.beta.size()});
          }
        },
        layer);
  }
  return refs;
}

std::vector<ParamRef> state_params(Model& m) {
  std::vector<ParamRef> refs;
  for (Layer& layer : m.layers) {
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer> ||
                        std::is_same_v<T, Conv2DLayer>) {
            refs.push_back({l.w.data(), l.w.size()});
            refs.push_back({l.b.data(), l.b.size()});
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            refs.push_back({l.gamma.data(), l.gamma.size()});
            refs.push_back({l.beta.data(), l.beta.size()});
            refs.push_back({l.running_mean.data(), l.running_mean.size()});
            refs.push_back({l.running_var.data(), l.running_var.size()});
          }
        },
        layer);
  }
  return refs;
}

size_t state_size(const Model& m) {
  size_t n = 0;
  for (const ParamRef& r : state_params(const_cast<Model&>(m))) n += r.size;
  return n;
}

std::vector<double> flatten_state(const Model& m) {
  std::vector<double> flat;
  flat.reserve(state_size(m));
  for (const ParamRef& r : state_params(const_cast<Model&>(m)))
    flat.insert(flat.end(), r.data, r.data + r.size);
  return flat;
}

void load_state(Model& m, const std::vector<double>& flat) {
  size_t off = 0;
  for (ParamRef& r : state_params(m)) {
    if (off + r.size > flat.size())
      throw std::invalid_argument("load_state: flat vector too short");
    std::memcpy(r.data, flat.data() + off, r.size * sizeof(double));
    off += r.size;
  }
  if (off != flat.size())
    throw std::invalid_argument("load_state: flat vector size mismatch");
}

}  // namespace mars
