#include "mars/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace mars {

namespace {

uint32_t read_be32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw std::runtime_error("truncated IDX file: " + path);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
         (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream imf(images_path, std::ios::binary);
  if (!imf) throw std::runtime_error("cannot open IDX file: " + images_path);
  if (read_be32(imf, images_path) != 0x00000803u)
    throw std::runtime_error("bad IDX image magic in: " + images_path);
  uint32_t n = read_be32(imf, images_path);
  uint32_t h = read_be32(imf, images_path);
  uint32_t w = read_be32(imf, images_path);

  std::ifstream lbf(labels_path, std::ios::binary);
  if (!lbf) throw std::runtime_error("cannot open IDX file: " + labels_path);
  if (read_be32(lbf, labels_path) != 0x00000801u)
    throw std::runtime_error("bad IDX label magic in: " + labels_path);
  uint32_t nl = read_be32(lbf, labels_path);
  if (nl != n)
    throw std::runtime_error("IDX image/label count mismatch between " +
                             images_path + " and " + labels_path);

  Dataset ds;
  ds.channels = 1;
  ds.h = h;
  ds.w = w;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  std::vector<unsigned char> buf(size_t(h) * w);
  int max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    imf.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
    if (!imf) throw std::runtime_error("truncated IDX file: " + images_path);
    Tensor img = Tensor::zeros({1, h, w});
    for (size_t p = 0; p < buf.size(); ++p)
      img.data[p] = static_cast<double>(buf[p]) / 255.0;
    ds.images.push_back(std::move(img));
    char lb = 0;
    lbf.read(&lb, 1);
    if (!lbf) throw std::runtime_error("truncated IDX file: " + labels_path);
    int label = static_cast<unsigned char>(lb);
    max_label = std::max(max_label, label);
    ds.labels.push_back(label);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

Dataset synth_dataset(uint64_t seed, int classes, size_t per_class, size_t h,
                      size_t w) {
  if (classes < 2) throw std::invalid_argument("synth_dataset: classes >= 2");
  if (per_class < 1)
    throw std::invalid_argument("synth_dataset: per_class >= 1");
  Dataset ds;
  ds.channels = 1;
  ds.h = h;
  ds.w = w;
  ds.num_classes = classes;
  Rng rng(seed);
  // One grid cell per class; the class signature is a bright rectangle in
  // that cell. Cells fill top rows first, so a bottom-right trigger patch
  // stays clear of every signature when classes < grid*grid.
  size_t grid = static_cast<size_t>(
      std::ceil(std::sqrt(static_cast<double>(classes))));
  size_t cell_h = std::max<size_t>(1, h / grid);
  size_t cell_w = std::max<size_t>(1, w / grid);
  for (int k = 0; k < classes; ++k) {
    size_t cr = static_cast<size_t>(k) / grid;
    size_t cc = static_cast<size_t>(k) % grid;
    size_t r0 = std::min(h - 1, cr * cell_h + cell_h / 4);
    size_t c0 = std::min(w - 1, cc * cell_w + cell_w / 4);
    size_t rh = std::max<size_t>(1, cell_h / 2);
    size_t rw = std::max<size_t>(1, cell_w / 2);
    rh = std::min(rh, h - r0);
    rw = std::min(rw, w - c0);
    for (size_t i = 0; i < per_class; ++i) {
      Tensor img = Tensor::zeros({1, h, w});
      for (size_t y = r0; y < r0 + rh; ++y)
        for (size_t x = c0; x < c0 + rw; ++x) img.data[y * w + x] = 1.0;
      for (double& px : img.data)
        px = std::clamp(px + 0.1 * rng.uniform(), 0.0, 1.0);
      ds.images.push_back(std::move(img));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

PartitionPlan dirichlet_partition(const Dataset& ds, size_t client_count,
                                  double alpha, uint64_t seed) {
  if (client_count < 1)
    throw std::invalid_argument("dirichlet_partition: client_count >= 1");
  if (!(alpha > 0.0))
    throw std::invalid_argument("dirichlet_partition: alpha > 0");
  PartitionPlan plan;
  plan.alpha = alpha;
  plan.client_count = client_count;
  plan.assignment.assign(client_count, {});
  std::vector<std::vector<size_t>> by_class(
      static_cast<size_t>(ds.num_classes));
  for (size_t i = 0; i < ds.labels.size(); ++i)
    by_class.at(static_cast<size_t>(ds.labels[i])).push_back(i);
  Rng rng(seed);
  for (const std::vector<size_t>& idx : by_class) {
    std::vector<double> p = rng.dirichlet(alpha, client_count);
    double cum = 0.0;
    size_t prev = 0;
    for (size_t cl = 0; cl < client_count; ++cl) {
      cum += p[cl];
      size_t next =
          cl + 1 == client_count
              ? idx.size()
              : std::min(idx.size(),
                         static_cast<size_t>(cum * double(idx.size())));
      for (size_t j = prev; j < next; ++j)
        plan.assignment[cl].push_back(idx[j]);
      prev = next;
    }
  }
  return plan;
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec) {
  if (image.shape.size() != 3)
    throw std::invalid_argument("apply_trigger: expected {C,H,W} image");
  size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
  if (spec.patch_height > h || spec.patch_width > w)
    throw std::invalid_argument("apply_trigger: patch exceeds image bounds");
  Tensor out = image;
  if (spec.patch_height == 0 || spec.patch_width == 0) return out;
  size_t r0 = 0, c0 = 0;
  switch (spec.anchor) {
    case Corner::TopLeft: break;
    case Corner::TopRight: c0 = w - spec.patch_width; break;
    case Corner::BottomLeft: r0 = h - spec.patch_height; break;
    case Corner::BottomRight:
      r0 = h - spec.patch_height;
      c0 = w - spec.patch_width;
      break;
  }
  for (size_t ch = 0; ch < c; ++ch)
    for (size_t y = r0; y < r0 + spec.patch_height; ++y)
      for (size_t x = c0; x < c0 + spec.patch_width; ++x)
        out.data[(ch * h + y) * w + x] = spec.pixel_value;
  return out;
}

Dataset poison_dataset(const Dataset& ds, const TriggerSpec& spec,
                       double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("poison_dataset: fraction in [0,1]");
  Dataset out = ds;
  size_t n = ds.size();
  size_t count = static_cast<size_t>(
      std::ceil(fraction * static_cast<double>(n) - 1e-12));
  if (count == 0) return out;
  Rng rng(seed);
  std::vector<size_t> chosen = rng.sample_without_replacement(n, count);
  for (size_t i : chosen) {
    out.images[i] = apply_trigger(out.images[i], spec);
    out.labels[i] = spec.target_label;
  }
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<size_t>& indices) {
  Dataset out;
  out.channels = ds.channels;
  out.h = ds.h;
  out.w = ds.w;
  out.num_classes = ds.num_classes;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (size_t i : indices) {
    out.images.push_back(ds.images.at(i));
    out.labels.push_back(ds.labels.at(i));
  }
  return out;
}

}  // namespace mars
