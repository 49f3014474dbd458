#pragma once

#include <string>
#include <vector>

#include "mars/config.hpp"
#include "mars/data.hpp"
#include "mars/defenses.hpp"
#include "mars/model.hpp"

namespace mars {

struct RoundReport {
  int round = 0;
  double acc = 0.0;
  double asr = 0.0;
  std::vector<int> selected_ids;  // kept by the defense
  std::vector<int> excluded_ids;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  std::string diagnostic;
};

struct Metrics {
  double acc = 0.0, asr = 0.0, tpr = 0.0, fpr = 0.0, cad = 0.0;
  bool tpr_defined = true;  // false: no attacker ever participated
  bool fpr_defined = true;
};

struct ExperimentResult {
  Metrics metrics;
  std::vector<RoundReport> rounds;
};

/// Runs the federated protocol: partition data, then per round sample the
/// scheduled attackers plus a seeded benign draw, train each client from the
/// current global model, aggregate through the configured defense, and score
/// the new global. Deterministic given the config.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Fraction of triggered test images predicted as the trigger target.
/// Target-class samples stay in, so the value floors near 1/c.
double compute_asr(const Model& m, const Dataset& clean_test,
                   const TriggerSpec& spec);

/// Cumulative-count TPR/FPR over all rounds; "identified" means excluded by
/// the defense. No attacker ever selected: TPR reported as 1.0 and flagged
/// undefined (mirrored for FPR with 0.0).
void compute_tpr_fpr(const std::vector<RoundReport>& reports, Metrics& out);

/// Composite score (acc + (1-asr) + tpr + (1-fpr)) / 4; fed_clp never
/// excludes clients, so it gets the 2-term (acc + (1-asr)) / 2 variant.
double compute_cad(const Metrics& m, const std::string& defense_name);

/// Writes report.csv and report.json under out_dir (created if missing).
/// All real values carry 6 decimals; output is byte-deterministic.
void emit_reports(const ExperimentConfig& cfg, const ExperimentResult& res,
                  const std::string& out_dir);

}  // namespace mars
