#pragma once

#include <cstdint>
#include <string>

#include "mars/attacks.hpp"

namespace mars {

struct DatasetConfig {
  std::string kind = "synth";  // "synth" or "idx"
  int classes = 10;
  size_t per_class = 300;
  size_t test_per_class = 50;
  size_t height = 16;
  size_t width = 16;
  std::string train_images, train_labels;  // idx only
  std::string test_images, test_labels;
};

struct DefenseConfig {
  std::string name = "mars";  // fed_avg|mars|mars_star|multi_krum|norm_clip|fed_clp
  double kappa = 5.0;
  double epsilon = 0.03;
  std::string layer_policy = "conv_bn_only";  // or "all_layers"
  std::string metric = "wasserstein";         // or "euclidean"/"cosine"
  int krum_f = -1;        // -1: use attackers_per_round
  int krum_m = -1;        // -1: use n - f
  double clip_bound = 1.0;
  double clp_u = 3.0;
};

struct ExperimentConfig {
  uint64_t seed = 42;
  size_t total_clients = 100;
  size_t attackers_total = 20;
  size_t clients_per_round = 20;
  size_t attackers_per_round = 4;
  int rounds = 15;
  double alpha = 0.9;
  DatasetConfig dataset;
  std::string architecture = "cnn-small";
  int local_epochs = 2;
  double lr = 0.05;
  size_t batch_size = 32;
  AttackConfig attack;
  DefenseConfig defense;
  std::string out_dir;  // empty: no report files
};

/// Parses the snake_case JSON config; absent fields keep their defaults.
/// Throws std::runtime_error with field context on malformed input.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Enforces the cross-field invariants (counts, ranges, attack/defense
/// consistency). Throws std::invalid_argument naming the violation.
void validate_config(const ExperimentConfig& cfg);

/// Re-serializes the config (the echo embedded in the JSON report).
/// indent is the number of leading spaces applied to every line.
std::string config_to_json(const ExperimentConfig& cfg, int indent);

/// String forms used in configs and CLI overrides.
AttackKind attack_kind_from_name(const std::string& name);
std::string attack_kind_name(AttackKind kind);

}  // namespace mars
