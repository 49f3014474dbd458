#pragma once

#include <string>
#include <vector>

#include "mars/rng.hpp"
#include "mars/tensor.hpp"

namespace mars {

/// Labeled images, each stored channel-major as {C,H,W} with pixels in [0,1].
struct Dataset {
  size_t channels = 1;
  size_t h = 0;
  size_t w = 0;
  int num_classes = 0;
  std::vector<Tensor> images;
  std::vector<int> labels;

  size_t size() const { return images.size(); }
};

enum class Corner { BottomRight, BottomLeft, TopRight, TopLeft };

/// Solid square patch stamped into a fixed corner; the backdoor trigger.
struct TriggerSpec {
  Corner anchor = Corner::BottomRight;
  size_t patch_height = 3;
  size_t patch_width = 3;
  double pixel_value = 1.0;
  int target_label = 0;
};

/// Disjoint per-client index lists covering [0, N).
struct PartitionPlan {
  double alpha = 0.0;
  size_t client_count = 0;
  std::vector<std::vector<size_t>> assignment;
};

/// Reads an IDX image/label file pair (big-endian, magics 0x803 / 0x801),
/// scaling pixels to [0,1]. Throws std::runtime_error naming the offending
/// file on bad magic, truncation, or image/label count mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Deterministic synthetic classification set: class k gets a bright
/// rectangle at a class-specific grid cell plus uniform noise of amplitude
/// 0.1, clamped to [0,1]. Images are class-major ordered.
Dataset synth_dataset(uint64_t seed, int classes, size_t per_class, size_t h,
                      size_t w);

/// Per-class proportions over clients drawn from Dir(alpha); each class's
/// indices split by cumulative proportion. Empty clients are permitted.
PartitionPlan dirichlet_partition(const Dataset& ds, size_t client_count,
                                  double alpha, uint64_t seed);

/// Stamps the patch; only patch pixels change and they all become
/// spec.pixel_value (in every channel).
Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec);

/// Copies the dataset, then triggers + relabels a seeded ceil(fraction*N)
/// subset to spec.target_label.
Dataset poison_dataset(const Dataset& ds, const TriggerSpec& spec,
                       double fraction, uint64_t seed);

Dataset subset(const Dataset& ds, const std::vector<size_t>& indices);

}  // namespace mars
