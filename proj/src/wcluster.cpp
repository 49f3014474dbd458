#include "mars/wcluster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mars {

namespace {

void check_pair(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.empty() || q.empty())
    throw std::invalid_argument("distance: empty value list");
  if (p.size() != q.size())
    throw std::invalid_argument("distance: length mismatch");
}

double l1_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace

double wasserstein_1d(const std::vector<double>& p,
                      const std::vector<double>& q) {
  check_pair(p, q);
  std::vector<double> ps = p, qs = q;
  std::sort(ps.begin(), ps.end());
  std::sort(qs.begin(), qs.end());
  double s = 0.0;
  for (size_t i = 0; i < ps.size(); ++i) s += std::abs(ps[i] - qs[i]);
  return s / static_cast<double>(ps.size());
}

double euclidean_distance(const std::vector<double>& p,
                          const std::vector<double>& q) {
  check_pair(p, q);
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
  return std::sqrt(s);
}

double cosine_distance(const std::vector<double>& p,
                       const std::vector<double>& q) {
  check_pair(p, q);
  double dot = 0.0, np = 0.0, nq = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    dot += p[i] * q[i];
    np += p[i] * p[i];
    nq += q[i] * q[i];
  }
  if (np == 0.0 && nq == 0.0) return 0.0;
  if (np == 0.0 || nq == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(np) * std::sqrt(nq));
}

double cluster_distance(ClusterMetric metric, const std::vector<double>& p,
                        const std::vector<double>& q) {
  switch (metric) {
    case ClusterMetric::Wasserstein: return wasserstein_1d(p, q);
    case ClusterMetric::Euclidean: return euclidean_distance(p, q);
    case ClusterMetric::Cosine: return cosine_distance(p, q);
  }
  throw std::logic_error("cluster_distance: unreachable");
}

namespace {

// Under Wasserstein the working representation is the sorted value list, so
// plain element-wise distances and means become the W1 distance and the
// Wasserstein barycenter of the members.
std::vector<std::vector<double>> working_points(
    const std::vector<CBEVector>& cbes, ClusterMetric metric) {
  std::vector<std::vector<double>> pts;
  pts.reserve(cbes.size());
  for (const CBEVector& c : cbes) {
    pts.push_back(c.values);
    if (metric == ClusterMetric::Wasserstein)
      std::sort(pts.back().begin(), pts.back().end());
  }
  return pts;
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& pts,
                            const std::vector<int>& assignment, int cluster) {
  std::vector<double> mean(pts[0].size(), 0.0);
  size_t count = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (assignment[i] != cluster) continue;
    ++count;
    for (size_t j = 0; j < mean.size(); ++j) mean[j] += pts[i][j];
  }
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

}  // namespace

ClusterResult k_wmeans(const std::vector<CBEVector>& cbes,
                       ClusterMetric metric) {
  if (cbes.size() < 2)
    throw std::invalid_argument("k_wmeans: need at least 2 CBE vectors");
  size_t len = cbes[0].values.size();
  if (len == 0) throw std::invalid_argument("k_wmeans: empty CBE vector");
  for (const CBEVector& c : cbes)
    if (c.values.size() != len)
      throw std::invalid_argument("k_wmeans: CBE length mismatch");

  size_t n = cbes.size();
  std::vector<std::vector<double>> pts = working_points(cbes, metric);

  // Farthest pair initialization; lexicographic scan keeps ties on the
  // lowest index pair.
  size_t bi = 0, bj = 1;
  double best = -1.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double d = cluster_distance(metric, pts[i], pts[j]);
      if (d > best) {
        best = d;
        bi = i;
        bj = j;
      }
    }

  ClusterResult res;
  if (best <= 0.0) {
    res.assignment.assign(n, 0);
    res.center0 = pts[0];
    res.center1 = pts[0];
    res.inter_center_distance = 0.0;
    res.degenerate = true;
    return res;
  }

  std::vector<std::vector<double>> centers = {pts[bi], pts[bj]};
  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<int> next(n, 0);
    for (size_t i = 0; i < n; ++i) {
      double d0 = cluster_distance(metric, pts[i], centers[0]);
      double d1 = cluster_distance(metric, pts[i], centers[1]);
      next[i] = d1 < d0 ? 1 : 0;
    }
    for (int cl = 0; cl < 2; ++cl) {
      if (std::count(next.begin(), next.end(), cl) > 0) continue;
      size_t far = 0;
      double far_d = -1.0;
      for (size_t i = 0; i < n; ++i) {
        double d = cluster_distance(metric, pts[i], centers[1 - cl]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next[far] = cl;
    }
    centers[0] = mean_of(pts, next, 0);
    centers[1] = mean_of(pts, next, 1);
    double cost = 0.0;
    for (size_t i = 0; i < n; ++i)
      cost += cluster_distance(metric, pts[i], centers[next[i]]);
    res.cost_trace.push_back(cost);
    bool same = iter > 0 && next == assignment;
    assignment = next;
    if (same) break;
  }

  res.assignment = assignment;
  res.center0 = centers[0];
  res.center1 = centers[1];
  res.inter_center_distance =
      cluster_distance(metric, centers[0], centers[1]);
  return res;
}

std::vector<size_t> select_clusters(const ClusterResult& result,
                                    double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("select_clusters: epsilon > 0");
  std::vector<size_t> out;
  if (result.degenerate || result.inter_center_distance < epsilon) {
    for (size_t i = 0; i < result.assignment.size(); ++i) out.push_back(i);
    return out;
  }
  int keep = l1_norm(result.center1) < l1_norm(result.center0) ? 1 : 0;
  for (size_t i = 0; i < result.assignment.size(); ++i)
    if (result.assignment[i] == keep) out.push_back(i);
  return out;
}

std::vector<size_t> majority_select(const ClusterResult& result) {
  std::vector<size_t> out;
  if (result.degenerate) {
    for (size_t i = 0; i < result.assignment.size(); ++i) out.push_back(i);
    return out;
  }
  long n1 = std::count(result.assignment.begin(), result.assignment.end(), 1);
  long n0 = static_cast<long>(result.assignment.size()) - n1;
  int keep;
  if (n0 != n1) {
    keep = n1 > n0 ? 1 : 0;
  } else {
    keep = l1_norm(result.center1) < l1_norm(result.center0) ? 1 : 0;
  }
  for (size_t i = 0; i < result.assignment.size(); ++i)
    if (result.assignment[i] == keep) out.push_back(i);
  return out;
}

}  // namespace mars
