#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mars/defenses.hpp"
#include "mars/model.hpp"
#include "mars/rng.hpp"

using namespace mars;

namespace {

LocalUpdate mk(int id, std::vector<double> params) {
  LocalUpdate u;
  u.client_id = id;
  u.params = std::move(params);
  return u;
}

// Single-layer batchnorm model with running_var pinned so that the per-channel
// energy reads exactly |gamma|.
Model bn_model(std::vector<double> gamma, std::vector<double> beta) {
  Model m;
  m.num_classes = static_cast<int>(gamma.size());
  BatchNormLayer bn;
  bn.channels = gamma.size();
  bn.running_mean.assign(bn.channels, 0.0);
  bn.running_var.assign(bn.channels, 1.0 - bn.eps);
  bn.gamma = std::move(gamma);
  bn.beta = std::move(beta);
  m.layers.push_back(bn);
  return m;
}

}  // namespace

TEST_CASE("fed_avg is the parameter mean and keeps everyone") {
  std::vector<LocalUpdate> ups = {mk(3, {1.0, 2.0}), mk(1, {3.0, 6.0})};
  DefenseOutcome out = fed_avg(ups);
  CHECK(out.global_parameters == std::vector<double>{2.0, 4.0});
  CHECK(out.selected_ids == std::vector<int>{3, 1});

  DefenseOutcome single = fed_avg({mk(9, {0.5, -1.5})});
  CHECK(single.global_parameters == std::vector<double>{0.5, -1.5});

  CHECK_THROWS_AS(fed_avg({}), std::invalid_argument);
  CHECK_THROWS_AS(fed_avg({mk(0, {1.0}), mk(1, {1.0, 2.0})}),
                  std::invalid_argument);
}

TEST_CASE("multi_krum scores sum the n-f-2 nearest squared distances") {
  // 1-D points 0, 0.1, 0.2, 10 with f=1: each point keeps its single nearest
  // neighbour, so the scores are 0.01, 0.01, 0.01, (10-0.2)^2 = 96.04.
  std::vector<LocalUpdate> ups = {mk(7, {0.0}), mk(3, {0.1}), mk(5, {0.2}),
                                  mk(9, {10.0})};
  DefenseOutcome out = multi_krum(ups, 1, 3);
  REQUIRE(out.diagnostics.scores.size() == 4);
  CHECK(out.diagnostics.scores[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(out.diagnostics.scores[1] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(out.diagnostics.scores[2] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(out.diagnostics.scores[3] == doctest::Approx(96.04).epsilon(1e-12));
  CHECK(out.selected_ids == std::vector<int>{7, 3, 5});
  CHECK(out.global_parameters[0] == doctest::Approx(0.1).epsilon(1e-12));

  // Tied scores resolve by update order (stable sort).
  DefenseOutcome one = multi_krum(ups, 1, 1);
  CHECK(one.selected_ids == std::vector<int>{7});

  CHECK_THROWS_AS(multi_krum(ups, 2, 1), std::invalid_argument);  // n < f + 3
  CHECK_THROWS_AS(multi_krum(ups, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(multi_krum(ups, 1, 5), std::invalid_argument);
}

TEST_CASE("multi_krum drops a far outlier in higher dimension") {
  Rng rng(88);
  std::vector<LocalUpdate> ups;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> p(3);
    for (double& v : p) v = 0.05 * rng.normal();
    if (i == 2)
      for (double& v : p) v += 40.0;
    ups.push_back(mk(i, p));
  }
  DefenseOutcome out = multi_krum(ups, 1, 4);
  CHECK(out.selected_ids == std::vector<int>{0, 1, 3, 4});
}

TEST_CASE("norm_clip rescales oversized deltas onto the ball") {
  std::vector<double> prev = {0.0, 0.0, 0.0};
  // Delta (3,4,0) has norm 5 -> clipped to (0.6,0.8,0); (0.1,0,0) passes.
  std::vector<LocalUpdate> ups = {mk(0, {3.0, 4.0, 0.0}),
                                  mk(1, {0.1, 0.0, 0.0})};
  DefenseOutcome out = norm_clip(ups, 1.0, prev);
  REQUIRE(out.global_parameters.size() == 3);
  CHECK(out.global_parameters[0] == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(out.global_parameters[1] == doctest::Approx(0.40).epsilon(1e-12));
  CHECK(out.global_parameters[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.selected_ids == std::vector<int>{0, 1});
}

TEST_CASE("norm_clip leaves in-bound updates exactly as fed_avg would") {
  Rng rng(17);
  std::vector<double> prev(6);
  for (double& v : prev) v = rng.normal();
  std::vector<LocalUpdate> ups;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> p = prev;
    for (double& v : p) v += 0.05 * rng.normal();  // norm well under 1
    ups.push_back(mk(i, p));
  }
  DefenseOutcome clipped = norm_clip(ups, 1.0, prev);
  DefenseOutcome plain = fed_avg(ups);
  for (size_t j = 0; j < prev.size(); ++j)
    CHECK(clipped.global_parameters[j] ==
          doctest::Approx(plain.global_parameters[j]).epsilon(1e-12));

  // A client that uploads the previous global verbatim contributes nothing.
  DefenseOutcome idle = norm_clip({mk(0, prev)}, 1.0, prev);
  for (size_t j = 0; j < prev.size(); ++j)
    CHECK(idle.global_parameters[j] == doctest::Approx(prev[j]).epsilon(1e-12));

  CHECK_THROWS_AS(norm_clip(ups, 0.0, prev), std::invalid_argument);
  CHECK_THROWS_AS(norm_clip(ups, 1.0, std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("fed_clp prunes channels above mean + u * std, never clients") {
  Model arch = bn_model({1.0, 1.0, 1.0, 1.0}, {0.0, 0.0, 0.0, 0.0});

  Model loud = bn_model({1.0, 1.0, 1.0, 5.0}, {0.1, 0.2, 0.3, 0.4});
  // Energies 1,1,1,5: mean 2, population std sqrt(3); u=1 puts the threshold
  // at 3.73, so only the last channel goes.
  DefenseOutcome out = fed_clp({mk(0, flatten_state(loud))}, arch, 1.0);
  Model got = arch;
  load_state(got, out.global_parameters);
  const BatchNormLayer& bn = std::get<BatchNormLayer>(got.layers[0]);
  CHECK(bn.gamma == std::vector<double>{1.0, 1.0, 1.0, 0.0});
  CHECK(bn.beta[0] == doctest::Approx(0.1));
  CHECK(bn.beta[3] == 0.0);
  CHECK(bn.running_var == std::get<BatchNormLayer>(loud.layers[0]).running_var);
  CHECK(out.selected_ids == std::vector<int>{0});
  CHECK(!out.diagnostics.notes.empty());

  // Huge threshold: nothing pruned, parameters pass through.
  DefenseOutcome lax = fed_clp({mk(0, flatten_state(loud))}, arch, 100.0);
  CHECK(lax.global_parameters == flatten_state(loud));

  // Equal energies: zero spread, strict > prunes nothing.
  Model flat = bn_model({2.0, 2.0, 2.0, 2.0}, {0.0, 0.0, 0.0, 0.0});
  DefenseOutcome even = fed_clp({mk(0, flatten_state(flat))}, arch, 1.0);
  CHECK(even.global_parameters == flatten_state(flat));

  CHECK_THROWS_AS(fed_clp({mk(0, flatten_state(flat))}, arch, 0.0),
                  std::invalid_argument);
}

TEST_CASE("fed_clp thresholds are layer-local and cover conv channels") {
  Model arch;
  arch.num_classes = 2;
  Conv2DLayer conv;
  conv.in_ch = 1;
  conv.out_ch = 2;
  conv.kh = conv.kw = 1;
  conv.w = {1.0, 10.0};  // 1x1 filters: energy = |w|
  conv.b = {0.5, 0.7};
  arch.layers.push_back(conv);
  BatchNormLayer bn;
  bn.channels = 2;
  bn.gamma = {1.0, 1.0};
  bn.beta = {0.3, 0.4};
  bn.running_mean = {0.0, 0.0};
  bn.running_var = {1.0 - bn.eps, 1.0 - bn.eps};
  arch.layers.push_back(bn);

  // Conv energies 1,10: mean 5.5, std 4.5, u=0.9 -> threshold 9.55, channel 1
  // pruned. BN energies tie at 1, so that layer is untouched.
  DefenseOutcome out = fed_clp({mk(4, flatten_state(arch))}, arch, 0.9);
  Model got = arch;
  load_state(got, out.global_parameters);
  const Conv2DLayer& c = std::get<Conv2DLayer>(got.layers[0]);
  CHECK(c.w == std::vector<double>{1.0, 0.0});
  CHECK(c.b == std::vector<double>{0.5, 0.0});
  const BatchNormLayer& n = std::get<BatchNormLayer>(got.layers[1]);
  CHECK(n.gamma == std::vector<double>{1.0, 1.0});
  CHECK(n.beta == std::vector<double>{0.3, 0.4});
}

namespace {

// Builds one benign-vs-scaled update family around a shared base model: the
// benign copies carry small parameter noise, the scaled copies multiply every
// trainable parameter and therefore every per-channel energy.
std::vector<LocalUpdate> scale_family(const Model& base, int benign,
                                      int scaled, uint64_t seed) {
  Rng rng(seed);
  std::vector<LocalUpdate> ups;
  int id = 0;
  for (int i = 0; i < benign; ++i) {
    Model c = base;
    for (ParamRef p : trainable_params(c))
      for (size_t j = 0; j < p.size; ++j) p.data[j] += 0.01 * rng.normal();
    ups.push_back(mk(id++, flatten_state(c)));
  }
  for (int i = 0; i < scaled; ++i) {
    Model c = base;
    double factor = 4.0 + 0.05 * i;
    for (ParamRef p : trainable_params(c))
      for (size_t j = 0; j < p.size; ++j) p.data[j] *= factor;
    ups.push_back(mk(id++, flatten_state(c)));
  }
  return ups;
}

}  // namespace

TEST_CASE("mars isolates energy-inflated updates and keeps the quiet cluster") {
  Rng init(404);
  Model base = make_model("cnn-small", 1, 8, 8, 4, init);
  std::vector<LocalUpdate> ups = scale_family(base, 4, 2, 11);

  MarsParams params;  // defaults: kappa 5, epsilon 0.03, conv+bn, wasserstein
  DefenseOutcome out = mars::mars(ups, base, params);
  CHECK(out.selected_ids == std::vector<int>{0, 1, 2, 3});
  CHECK(out.diagnostics.has_cluster);
  CHECK(out.diagnostics.cbes.size() == 6);
  CHECK(out.diagnostics.cluster.inter_center_distance > params.epsilon);

  // The aggregate is the plain mean of the kept updates.
  std::vector<LocalUpdate> kept(ups.begin(), ups.begin() + 4);
  DefenseOutcome want = fed_avg(kept);
  CHECK(out.global_parameters == want.global_parameters);

  // Determinism: same inputs, same outcome.
  DefenseOutcome again = mars::mars(ups, base, params);
  CHECK(again.selected_ids == out.selected_ids);
  CHECK(again.global_parameters == out.global_parameters);
}

TEST_CASE("majority selection flips the outcome when attackers outnumber") {
  Rng init(405);
  Model base = make_model("cnn-small", 1, 8, 8, 4, init);
  std::vector<LocalUpdate> ups = scale_family(base, 2, 4, 12);

  MarsParams by_norm;
  DefenseOutcome norm_out = mars::mars(ups, base, by_norm);
  CHECK(norm_out.selected_ids == std::vector<int>{0, 1});  // quieter center

  MarsParams by_majority = by_norm;
  by_majority.selection = MarsSelection::Majority;
  DefenseOutcome maj_out = mars::mars(ups, base, by_majority);
  CHECK(maj_out.selected_ids == std::vector<int>{2, 3, 4, 5});  // bigger side
}

TEST_CASE("mars keeps everyone when the clusters collapse together") {
  Rng init(406);
  Model base = make_model("cnn-small", 1, 8, 8, 4, init);
  std::vector<double> flat = flatten_state(base);
  std::vector<LocalUpdate> ups;
  for (int i = 0; i < 5; ++i) ups.push_back(mk(i, flat));

  MarsParams params;
  DefenseOutcome out = mars::mars(ups, base, params);
  CHECK(out.diagnostics.cluster.degenerate);
  CHECK(out.selected_ids == std::vector<int>{0, 1, 2, 3, 4});
  // Mean of five identical vectors: equal up to summation rounding.
  REQUIRE(out.global_parameters.size() == flat.size());
  for (size_t j = 0; j < flat.size(); ++j)
    CHECK(out.global_parameters[j] == doctest::Approx(flat[j]).epsilon(1e-12));
}

TEST_CASE("mars passes a lone update through with a note") {
  Rng init(407);
  Model base = make_model("cnn-small", 1, 8, 8, 4, init);
  std::vector<LocalUpdate> ups = {mk(6, flatten_state(base))};
  MarsParams params;
  DefenseOutcome out = mars::mars(ups, base, params);
  CHECK(out.global_parameters == ups[0].params);
  CHECK(out.selected_ids == std::vector<int>{6});
  CHECK(!out.diagnostics.has_cluster);
  CHECK(!out.diagnostics.notes.empty());
}

TEST_CASE("a generous epsilon keeps both clusters even when separated") {
  Rng init(408);
  Model base = make_model("cnn-small", 1, 8, 8, 4, init);
  std::vector<LocalUpdate> ups = scale_family(base, 3, 2, 13);
  MarsParams params;
  params.epsilon = 1e9;  // inter-center distance can never clear this
  DefenseOutcome out = mars::mars(ups, base, params);
  CHECK(out.selected_ids == std::vector<int>{0, 1, 2, 3, 4});
}
