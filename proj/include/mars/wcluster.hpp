#pragma once

#include <vector>

#include "mars/be.hpp"

namespace mars {

/// Distance = (1/n) * sum_i |sort(p)_i - sort(q)_i|: the closed form of the
/// 1-D Wasserstein distance between uniform empirical distributions. Throws
/// on empty or length-mismatched inputs.
double wasserstein_1d(const std::vector<double>& p,
                      const std::vector<double>& q);

double euclidean_distance(const std::vector<double>& p,
                          const std::vector<double>& q);

/// 1 - cosine similarity; a zero vector against a nonzero one counts as 1.
double cosine_distance(const std::vector<double>& p,
                       const std::vector<double>& q);

enum class ClusterMetric { Wasserstein, Euclidean, Cosine };

double cluster_distance(ClusterMetric metric, const std::vector<double>& p,
                        const std::vector<double>& q);

struct ClusterResult {
  std::vector<int> assignment;    // per input, 0 or 1
  std::vector<double> center0;    // sorted ascending under Wasserstein
  std::vector<double> center1;
  double inter_center_distance = 0.0;
  bool degenerate = false;        // all inputs identical: single cluster
  std::vector<double> cost_trace; // within-cluster cost after each iteration
};

/// 2-means under the chosen metric. Under Wasserstein, members are handled
/// as sorted value lists and the centroid is their element-wise mean (the
/// 1-D Wasserstein barycenter); under Euclidean/Cosine the centroid is the
/// plain element-wise mean. Deterministic: initialized from the two inputs
/// at maximal pairwise distance (ties toward the lower index pair), ties in
/// assignment go to cluster 0, an emptied cluster is repaired by moving the
/// point farthest from its center, and iteration stops on an unchanged
/// assignment or after 100 rounds. Identical inputs yield a degenerate
/// single-cluster result with inter_center_distance 0.
ClusterResult k_wmeans(const std::vector<CBEVector>& cbes,
                       ClusterMetric metric = ClusterMetric::Wasserstein);

/// All indices when the centers are closer than epsilon (nothing to
/// separate); otherwise the cluster whose center has the smaller L1 norm,
/// cluster 0 on an exact tie.
std::vector<size_t> select_clusters(const ClusterResult& result,
                                    double epsilon);

/// The larger cluster; on a size tie, the one with the smaller center L1
/// norm (cluster 0 if that ties too).
std::vector<size_t> majority_select(const ClusterResult& result);

}  // namespace mars
