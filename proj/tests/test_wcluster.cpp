#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "mars/rng.hpp"
#include "mars/wcluster.hpp"
#include "oracles.hpp"

using namespace mars;

namespace {

CBEVector as_cbe(std::vector<double> v) {
  CBEVector c;
  c.values = std::move(v);
  c.kappa = 100.0;
  return c;
}

std::vector<double> random_vec(Rng& rng, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

TEST_CASE("the three metrics on the motivating triple") {
  // Two backdoored profiles ({1..5} and its reshuffle-like {5,5,3,2,2}) and
  // one flat benign profile: only the transport metric calls the first two
  // close and both far from the benign one.
  std::vector<double> l1 = {1, 2, 3, 4, 5};
  std::vector<double> l2 = {5, 5, 3, 2, 2};
  std::vector<double> l3 = {1, 1, 1, 1, 1};

  CHECK(round2(euclidean_distance(l1, l2)) == doctest::Approx(6.16));
  CHECK(round2(euclidean_distance(l1, l3)) == doctest::Approx(5.48));
  CHECK(round2(euclidean_distance(l2, l3)) == doctest::Approx(6.16));

  CHECK(round2(cosine_distance(l1, l2)) == doctest::Approx(0.31));
  CHECK(round2(cosine_distance(l1, l3)) == doctest::Approx(0.10));
  CHECK(round2(cosine_distance(l2, l3)) == doctest::Approx(0.07));

  CHECK(wasserstein_1d(l1, l2) == doctest::Approx(0.40));
  CHECK(wasserstein_1d(l1, l3) == doctest::Approx(2.00));
  CHECK(wasserstein_1d(l2, l3) == doctest::Approx(2.40));
}

TEST_CASE("wasserstein_1d input contract") {
  CHECK_THROWS_AS(wasserstein_1d({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(wasserstein_1d({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("wasserstein_1d metric axioms and permutation invariance") {
  Rng rng(314);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 1 + static_cast<size_t>(rng.uniform_int(8));
    std::vector<double> p = random_vec(rng, n, -5.0, 5.0);
    std::vector<double> q = random_vec(rng, n, -5.0, 5.0);
    std::vector<double> r = random_vec(rng, n, -5.0, 5.0);

    double dpq = wasserstein_1d(p, q);
    CHECK(dpq >= 0.0);
    CHECK(dpq == doctest::Approx(wasserstein_1d(q, p)).epsilon(1e-12));
    CHECK(wasserstein_1d(p, p) == doctest::Approx(0.0));
    CHECK(dpq <= wasserstein_1d(p, r) + wasserstein_1d(r, q) + 1e-9);

    std::vector<double> p_shuf = p;
    rng.shuffle(p_shuf);
    CHECK(wasserstein_1d(p, p_shuf) == doctest::Approx(0.0));
    CHECK(wasserstein_1d(p_shuf, q) == doctest::Approx(dpq).epsilon(1e-12));
  }
}

TEST_CASE("cosine_distance zero-vector conventions") {
  std::vector<double> z = {0, 0, 0};
  std::vector<double> p = {1, 2, 3};
  CHECK(cosine_distance(z, z) == doctest::Approx(0.0));
  CHECK(cosine_distance(z, p) == doctest::Approx(1.0));
  CHECK(cosine_distance(p, z) == doctest::Approx(1.0));
  CHECK(cosine_distance(p, p) == doctest::Approx(0.0));
}

TEST_CASE("k_wmeans separates the motivating fixture as the oracle says") {
  std::vector<CBEVector> cbes = {as_cbe({1, 2, 3, 4, 5}), as_cbe({5, 5, 3, 2, 2}),
                                 as_cbe({1, 1, 1, 1, 1}),
                                 as_cbe({1, 1, 1, 1, 1.1})};
  ClusterResult res = k_wmeans(cbes);
  REQUIRE(res.assignment.size() == 4);
  CHECK_FALSE(res.degenerate);
  CHECK(res.assignment[0] == res.assignment[1]);
  CHECK(res.assignment[2] == res.assignment[3]);
  CHECK(res.assignment[0] != res.assignment[2]);

  // The exhaustive oracle agrees this is the optimal 2-partition.
  oracles::BestPartition best = oracles::best_two_partition(cbes);
  CHECK(oracles::assignment_cost(cbes, res.assignment) ==
        doctest::Approx(best.cost).epsilon(1e-12));

  // Centers are sorted ascending (they are quantile functions).
  CHECK(std::is_sorted(res.center0.begin(), res.center0.end()));
  CHECK(std::is_sorted(res.center1.begin(), res.center1.end()));

  // Determinism: a second run reproduces the result bit for bit.
  ClusterResult again = k_wmeans(cbes);
  CHECK(again.assignment == res.assignment);
  CHECK(again.inter_center_distance == res.inter_center_distance);
}

TEST_CASE("k_wmeans matches the exhaustive oracle on two-group inputs") {
  // The clustering runs on inputs with planted group structure (that is what
  // a round of updates looks like); on such instances the farthest-pair
  // Lloyd iteration must land exactly on the optimal 2-partition.
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    size_t n = 3 + static_cast<size_t>(rng.uniform_int(5));  // 3..7 points
    size_t dim = 2 + static_cast<size_t>(rng.uniform_int(3));
    size_t low_count = 1 + static_cast<size_t>(
                               rng.uniform_int(static_cast<int>(n) - 1));
    double gap = rng.uniform(1.5, 4.0);  // between-group offset
    std::vector<CBEVector> cbes;
    for (size_t i = 0; i < n; ++i) {
      double base = i < low_count ? 0.0 : gap;
      std::vector<double> v = random_vec(rng, dim, base, base + 0.4);
      cbes.push_back(as_cbe(v));
    }
    rng.shuffle(cbes);
    ClusterResult res = k_wmeans(cbes);
    REQUIRE(!res.degenerate);
    oracles::BestPartition best = oracles::best_two_partition(cbes);
    CHECK(oracles::assignment_cost(cbes, res.assignment) ==
          doctest::Approx(best.cost).epsilon(1e-10));
  }
}

TEST_CASE("the exhaustive oracle lower-bounds k_wmeans on unstructured inputs") {
  // Uniform noise has no planted split; a single-init Lloyd run may stop in a
  // local optimum there, but it can never beat the exhaustive minimum.
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    size_t n = 3 + static_cast<size_t>(rng.uniform_int(4));
    size_t dim = 2 + static_cast<size_t>(rng.uniform_int(3));
    std::vector<CBEVector> cbes;
    for (size_t i = 0; i < n; ++i)
      cbes.push_back(as_cbe(random_vec(rng, dim, 0.0, 3.0)));
    ClusterResult res = k_wmeans(cbes);
    if (res.degenerate) continue;
    oracles::BestPartition best = oracles::best_two_partition(cbes);
    CHECK(oracles::assignment_cost(cbes, res.assignment) >= best.cost - 1e-10);
  }
}

TEST_CASE("k_wmeans cost trace never increases") {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<CBEVector> cbes;
    for (int i = 0; i < 12; ++i)
      cbes.push_back(as_cbe(random_vec(rng, 5, 0.0, 2.0)));
    ClusterResult res = k_wmeans(cbes);
    for (size_t i = 1; i < res.cost_trace.size(); ++i)
      CHECK(res.cost_trace[i] <= res.cost_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("identical inputs give the degenerate single-cluster result") {
  std::vector<CBEVector> cbes(5, as_cbe({2, 2, 2}));
  ClusterResult res = k_wmeans(cbes);
  CHECK(res.degenerate);
  CHECK(res.inter_center_distance == doctest::Approx(0.0));
  for (int a : res.assignment) CHECK(a == 0);
  // Everything is selected regardless of epsilon.
  CHECK(select_clusters(res, 1e-9).size() == 5);
}

TEST_CASE("k_wmeans requires at least two equal-length inputs") {
  CHECK_THROWS_AS(k_wmeans({as_cbe({1, 2})}), std::invalid_argument);
  CHECK_THROWS_AS(k_wmeans({as_cbe({1, 2}), as_cbe({1, 2, 3})}),
                  std::invalid_argument);
}

TEST_CASE("select_clusters keeps the small-norm cluster beyond epsilon") {
  std::vector<CBEVector> cbes = {as_cbe({1, 2, 3, 4, 5}), as_cbe({5, 5, 3, 2, 2}),
                                 as_cbe({1, 1, 1, 1, 1}),
                                 as_cbe({1, 1, 1, 1, 1.1})};
  ClusterResult res = k_wmeans(cbes);
  // Centers: mean of sorted{L1,L2} vs mean of the two near-flat vectors;
  // their distance is 2.19, so any epsilon below that separates.
  CHECK(res.inter_center_distance == doctest::Approx(2.19).epsilon(1e-9));
  for (double eps : {0.01, 0.5, 1.99}) {
    std::vector<size_t> kept = select_clusters(res, eps);
    CHECK(std::set<size_t>(kept.begin(), kept.end()) ==
          std::set<size_t>{2, 3});
  }
  CHECK(select_clusters(res, 2.3).size() == 4);  // epsilon above the gap
}

TEST_CASE("select_clusters hand cases: norm order and exact ties") {
  ClusterResult res;
  res.assignment = {0, 1, 1};
  res.center0 = {5, 5};
  res.center1 = {1, 1};
  res.inter_center_distance = 4.0;
  std::vector<size_t> kept = select_clusters(res, 0.03);
  CHECK(kept == std::vector<size_t>{1, 2});

  res.center1 = {4, 6};  // same L1 norm as {5,5}: tie goes to cluster 0
  kept = select_clusters(res, 0.03);
  CHECK(kept == std::vector<size_t>{0});
}

TEST_CASE("majority_select takes the big cluster, norm breaks size ties") {
  ClusterResult res;
  res.assignment = {0, 1, 1, 1};
  res.center0 = {0.1};
  res.center1 = {9.0};
  res.inter_center_distance = 8.9;
  CHECK(majority_select(res) == std::vector<size_t>{1, 2, 3});

  res.assignment = {0, 1, 0, 1};
  res.center0 = {7.0};
  res.center1 = {3.0};
  CHECK(majority_select(res) == std::vector<size_t>{1, 3});
}
