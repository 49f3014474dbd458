#pragma once

#include <string>
#include <vector>

#include "mars/attacks.hpp"
#include "mars/be.hpp"
#include "mars/model.hpp"
#include "mars/wcluster.hpp"

namespace mars {

struct DefenseDiagnostics {
  std::vector<double> scores;     // multi_krum distance scores
  std::vector<CBEVector> cbes;    // per-update CBEs (cluster defenses)
  ClusterResult cluster;
  bool has_cluster = false;
  std::vector<std::string> notes;
};

struct DefenseOutcome {
  std::vector<int> selected_ids;          // client ids that were aggregated
  std::vector<double> global_parameters;  // flatten_state order
  DefenseDiagnostics diagnostics;
};

enum class MarsSelection { CenterNorm, Majority };

struct MarsParams {
  double kappa = 5.0;
  double epsilon = 0.03;
  LayerPolicy policy = LayerPolicy::ConvBnOnly;
  MarsSelection selection = MarsSelection::CenterNorm;
  ClusterMetric metric = ClusterMetric::Wasserstein;
};

/// Unweighted element-wise mean of all updates; selects everyone.
DefenseOutcome fed_avg(const std::vector<LocalUpdate>& updates);

/// Backdoor-energy clustering defense: per-update CBE, 2-means under the
/// Wasserstein metric, then keep the low-center-norm cluster (or the
/// majority cluster) and average it. arch supplies the layer structure used
/// to interpret the flat parameter vectors.
DefenseOutcome mars(const std::vector<LocalUpdate>& updates, const Model& arch,
                    const MarsParams& params);

/// score_i = sum of squared L2 distances to the n-f-2 nearest other updates;
/// averages the m lowest-scoring updates. Throws when n-f-2 < 1.
DefenseOutcome multi_krum(const std::vector<LocalUpdate>& updates, size_t f,
                          size_t m);

/// Scales each delta from previous_global to norm at most bound, averages
/// the scaled deltas, and adds the result back onto previous_global.
DefenseOutcome norm_clip(const std::vector<LocalUpdate>& updates, double bound,
                         const std::vector<double>& previous_global);

/// Per-update channel pruning: within each analyzable layer, zero the
/// outgoing parameters of channels whose BE exceeds mean + u * std (strict,
/// population std), then average everything. Never excludes a client.
DefenseOutcome fed_clp(const std::vector<LocalUpdate>& updates,
                       const Model& arch, double u);

}  // namespace mars
