#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mars/config.hpp"
#include "mars/harness.hpp"

namespace {

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<int> rounds;
  std::optional<std::string> defense;
  std::optional<std::string> attack;
  std::optional<double> kappa;
  std::optional<double> epsilon;
  std::optional<double> lambda;
  std::optional<double> alpha;
  std::optional<std::string> out_dir;
};

void apply(const Overrides& o, mars::ExperimentConfig& cfg) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.rounds) cfg.rounds = *o.rounds;
  if (o.defense) cfg.defense.name = *o.defense;
  if (o.attack) cfg.attack.kind = mars::attack_kind_from_name(*o.attack);
  if (o.kappa) cfg.defense.kappa = *o.kappa;
  if (o.epsilon) cfg.defense.epsilon = *o.epsilon;
  if (o.lambda) cfg.attack.lambda = *o.lambda;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
}

void apply_sweep_value(mars::ExperimentConfig& cfg, const std::string& param,
                       const std::string& value) {
  if (param == "seed") cfg.seed = std::stoull(value);
  else if (param == "rounds") cfg.rounds = std::stoi(value);
  else if (param == "defense") cfg.defense.name = value;
  else if (param == "attack") cfg.attack.kind = mars::attack_kind_from_name(value);
  else if (param == "kappa") cfg.defense.kappa = std::stod(value);
  else if (param == "epsilon") cfg.defense.epsilon = std::stod(value);
  else if (param == "lambda") cfg.attack.lambda = std::stod(value);
  else if (param == "alpha") cfg.alpha = std::stod(value);
  else
    throw std::invalid_argument(
        "sweep: unknown --param \"" + param +
        "\" (expected seed|rounds|defense|attack|kappa|epsilon|lambda|alpha)");
}

void print_metrics(const mars::Metrics& m) {
  char line[256];
  std::snprintf(line, sizeof(line),
                "acc=%.6f asr=%.6f tpr=%.6f%s fpr=%.6f%s cad=%.6f", m.acc,
                m.asr, m.tpr, m.tpr_defined ? "" : " (n/a)", m.fpr,
                m.fpr_defined ? "" : " (n/a)", m.cad);
  std::cout << line << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning backdoor attack/defense laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  CLI::App* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "JSON config path")->required();
  run->add_option("--seed", ov.seed, "Master seed override");
  run->add_option("--rounds", ov.rounds, "Round count override");
  run->add_option("--defense", ov.defense, "Defense name override");
  run->add_option("--attack", ov.attack, "Attack kind override");
  run->add_option("--kappa", ov.kappa, "Top-BE percentage override");
  run->add_option("--epsilon", ov.epsilon, "Inter-center threshold override");
  run->add_option("--lambda", ov.lambda, "BE regularization weight override");
  run->add_option("--alpha", ov.alpha, "Dirichlet concentration override");
  run->add_option("--out-dir", ov.out_dir, "Report output directory override");

  CLI::App* validate = app.add_subcommand("validate", "Check a config");
  validate->add_option("--config", config_path, "JSON config path")->required();

  std::string sweep_param;
  std::vector<std::string> sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->add_option("--config", config_path, "JSON config path")->required();
  sweep->add_option("--param", sweep_param, "Parameter to sweep")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")
      ->required()
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(validate)) {
      mars::ExperimentConfig cfg = mars::parse_config_file(config_path);
      mars::validate_config(cfg);
      std::cout << "config OK: " << config_path << "\n";
      return 0;
    }
    if (app.got_subcommand(run)) {
      mars::ExperimentConfig cfg = mars::parse_config_file(config_path);
      apply(ov, cfg);
      mars::validate_config(cfg);
      mars::ExperimentResult res = mars::run_experiment(cfg);
      print_metrics(res.metrics);
      if (!cfg.out_dir.empty())
        std::cout << "reports written to " << cfg.out_dir << "\n";
      return 0;
    }
    // sweep
    mars::ExperimentConfig base = mars::parse_config_file(config_path);
    if (sweep_values.empty())
      throw std::invalid_argument("sweep: --values must be nonempty");
    for (const std::string& value : sweep_values) {
      mars::ExperimentConfig cfg = base;
      apply_sweep_value(cfg, sweep_param, value);
      if (!base.out_dir.empty())
        cfg.out_dir = base.out_dir + "/" + sweep_param + "=" + value;
      mars::validate_config(cfg);
      std::cout << sweep_param << "=" << value << ": ";
      mars::ExperimentResult res = mars::run_experiment(cfg);
      print_metrics(res.metrics);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
