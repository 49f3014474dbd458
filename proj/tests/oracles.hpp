// Independent reference implementations the tests compare against. These are
// deliberately written with different algorithms than the library: singular
// values via cyclic Jacobi eigen-iteration instead of power iteration, and
// clustering via exhaustive enumeration instead of Lloyd iteration.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mars/be.hpp"
#include "mars/tensor.hpp"

namespace oracles {

/// Largest singular value of a rank-2 tensor: eigenvalues of A^T A by cyclic
/// Jacobi rotations, then sqrt of the largest.
inline double jacobi_sigma_max(const mars::Tensor& m) {
  size_t rows = m.shape[0], cols = m.shape[1];
  // S = A^T A, symmetric positive semi-definite, cols x cols.
  std::vector<double> s(cols * cols, 0.0);
  for (size_t i = 0; i < cols; ++i)
    for (size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (size_t r = 0; r < rows; ++r)
        acc += m.data[r * cols + i] * m.data[r * cols + j];
      s[i * cols + j] = acc;
    }

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t i = 0; i < cols; ++i)
      for (size_t j = i + 1; j < cols; ++j) off += s[i * cols + j] * s[i * cols + j];
    if (off < 1e-26) break;
    for (size_t p = 0; p < cols; ++p) {
      for (size_t q = p + 1; q < cols; ++q) {
        double apq = s[p * cols + q];
        if (apq == 0.0) continue;
        double app = s[p * cols + p], aqq = s[q * cols + q];
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double sn = t * c;
        for (size_t k = 0; k < cols; ++k) {
          double skp = s[k * cols + p], skq = s[k * cols + q];
          s[k * cols + p] = c * skp - sn * skq;
          s[k * cols + q] = sn * skp + c * skq;
        }
        for (size_t k = 0; k < cols; ++k) {
          double spk = s[p * cols + k], sqk = s[q * cols + k];
          s[p * cols + k] = c * spk - sn * sqk;
          s[q * cols + k] = sn * spk + c * sqk;
        }
      }
    }
  }
  double lmax = 0.0;
  for (size_t i = 0; i < cols; ++i) lmax = std::max(lmax, s[i * cols + i]);
  return std::sqrt(std::max(0.0, lmax));
}

/// W1 between two equal-length already-sorted value lists.
inline double w1_sorted(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

/// Within-cluster cost of a two-cluster split mask: each cluster's center is
/// the element-wise mean of its sorted members (the 1-D Wasserstein
/// barycenter), the cost is the summed W1 of members to their center.
inline double two_cluster_cost(const std::vector<std::vector<double>>& sorted_pts,
                               uint32_t mask) {
  double total = 0.0;
  for (int side = 0; side < 2; ++side) {
    std::vector<size_t> members;
    for (size_t i = 0; i < sorted_pts.size(); ++i)
      if (((mask >> i) & 1u) == static_cast<uint32_t>(side)) members.push_back(i);
    if (members.empty()) continue;
    std::vector<double> center(sorted_pts[0].size(), 0.0);
    for (size_t i : members)
      for (size_t d = 0; d < center.size(); ++d) center[d] += sorted_pts[i][d];
    for (double& v : center) v /= static_cast<double>(members.size());
    for (size_t i : members) total += w1_sorted(sorted_pts[i], center);
  }
  return total;
}

struct BestPartition {
  uint32_t mask = 0;  // bit i set: point i in cluster 1
  double cost = 0.0;
};

/// Exhaustive best two-cluster partition (both clusters nonempty) of up to
/// 8 CBE vectors under the within-cluster Wasserstein cost.
inline BestPartition best_two_partition(const std::vector<mars::CBEVector>& cbes) {
  std::vector<std::vector<double>> sorted_pts;
  for (const mars::CBEVector& c : cbes) {
    std::vector<double> v = c.values;
    std::sort(v.begin(), v.end());
    sorted_pts.push_back(std::move(v));
  }
  size_t n = sorted_pts.size();
  BestPartition best;
  best.cost = 1e300;
  // Fix point 0 in cluster 0 (even masks) to halve the label-symmetric
  // search space; the upper limit keeps cluster 1 nonempty.
  for (uint32_t mask = 2; mask < (1u << n) - 1u; mask += 2) {
    double cost = two_cluster_cost(sorted_pts, mask);
    if (cost < best.cost) {
      best.cost = cost;
      best.mask = mask;
    }
  }
  return best;
}

/// Cost of an assignment produced by the library, under the oracle's cost.
inline double assignment_cost(const std::vector<mars::CBEVector>& cbes,
                              const std::vector<int>& assignment) {
  std::vector<std::vector<double>> sorted_pts;
  for (const mars::CBEVector& c : cbes) {
    std::vector<double> v = c.values;
    std::sort(v.begin(), v.end());
    sorted_pts.push_back(std::move(v));
  }
  uint32_t mask = 0;
  for (size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == 1) mask |= (1u << i);
  return two_cluster_cost(sorted_pts, mask);
}

}  // namespace oracles
