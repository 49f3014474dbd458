#include "mars/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mars/attacks.hpp"
#include "mars/nn.hpp"

namespace mars {

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct Pools {
  Dataset train;
  Dataset test;
};

Pools build_datasets(const ExperimentConfig& cfg) {
  Pools p;
  const DatasetConfig& d = cfg.dataset;
  if (d.kind == "synth") {
    p.train = synth_dataset(derive_seed(cfg.seed, 10, 0), d.classes,
                            d.per_class, d.height, d.width);
    p.test = synth_dataset(derive_seed(cfg.seed, 10, 1), d.classes,
                           d.test_per_class, d.height, d.width);
  } else {
    p.train = load_idx(d.train_images, d.train_labels);
    p.test = load_idx(d.test_images, d.test_labels);
    p.test.num_classes = p.train.num_classes =
        std::max(p.train.num_classes, p.test.num_classes);
  }
  return p;
}

MarsParams mars_params_from(const ExperimentConfig& cfg,
                            MarsSelection selection) {
  MarsParams p;
  p.kappa = cfg.defense.kappa;
  p.epsilon = cfg.defense.epsilon;
  p.policy = cfg.defense.layer_policy == "all_layers" ? LayerPolicy::AllLayers
                                                      : LayerPolicy::ConvBnOnly;
  p.selection = selection;
  if (cfg.defense.metric == "euclidean") p.metric = ClusterMetric::Euclidean;
  else if (cfg.defense.metric == "cosine") p.metric = ClusterMetric::Cosine;
  else p.metric = ClusterMetric::Wasserstein;
  return p;
}

DefenseOutcome run_defense(const ExperimentConfig& cfg,
                           const std::vector<LocalUpdate>& updates,
                           const Model& arch,
                           const std::vector<double>& prev_global) {
  const DefenseConfig& d = cfg.defense;
  if (d.name == "fed_avg") return fed_avg(updates);
  if (d.name == "mars")
    return mars(updates, arch, mars_params_from(cfg, MarsSelection::CenterNorm));
  if (d.name == "mars_star")
    return mars(updates, arch, mars_params_from(cfg, MarsSelection::Majority));
  if (d.name == "multi_krum") {
    size_t f = d.krum_f >= 0 ? static_cast<size_t>(d.krum_f)
                             : cfg.attackers_per_round;
    size_t m = d.krum_m >= 0 ? static_cast<size_t>(d.krum_m)
                             : updates.size() - f;
    return multi_krum(updates, f, m);
  }
  if (d.name == "norm_clip")
    return norm_clip(updates, d.clip_bound, prev_global);
  if (d.name == "fed_clp") return fed_clp(updates, arch, d.clp_u);
  throw std::invalid_argument("unknown defense: " + d.name);
}

std::string digest_of(const DefenseOutcome& out) {
  std::ostringstream o;
  o << "kept=" << out.selected_ids.size();
  if (out.diagnostics.has_cluster) {
    const ClusterResult& cl = out.diagnostics.cluster;
    double n0 = 0.0, n1 = 0.0;
    for (double v : cl.center0) n0 += std::abs(v);
    for (double v : cl.center1) n1 += std::abs(v);
    o << " inter_center=" << fmt6(cl.inter_center_distance)
      << " center_l1=" << fmt6(n0) << "/" << fmt6(n1)
      << (cl.degenerate ? " degenerate" : "");
  }
  if (!out.diagnostics.notes.empty()) o << " " << out.diagnostics.notes[0];
  return o.str();
}

}  // namespace

double compute_asr(const Model& m, const Dataset& clean_test,
                   const TriggerSpec& spec) {
  if (clean_test.size() == 0)
    throw std::invalid_argument("compute_asr: empty test set");
  std::vector<Tensor> triggered;
  triggered.reserve(clean_test.size());
  for (const Tensor& img : clean_test.images)
    triggered.push_back(apply_trigger(img, spec));
  std::vector<int> preds = predict(m, triggered);
  size_t hits = 0;
  for (int p : preds)
    if (p == spec.target_label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

void compute_tpr_fpr(const std::vector<RoundReport>& reports, Metrics& out) {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (const RoundReport& r : reports) {
    tp += r.tp;
    fp += r.fp;
    tn += r.tn;
    fn += r.fn;
  }
  if (tp + fn > 0) {
    out.tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.tpr_defined = true;
  } else {
    out.tpr = 1.0;
    out.tpr_defined = false;
  }
  if (fp + tn > 0) {
    out.fpr = static_cast<double>(fp) / static_cast<double>(fp + tn);
    out.fpr_defined = true;
  } else {
    out.fpr = 0.0;
    out.fpr_defined = false;
  }
}

double compute_cad(const Metrics& m, const std::string& defense_name) {
  if (defense_name == "fed_clp") return (m.acc + (1.0 - m.asr)) / 2.0;
  return (m.acc + (1.0 - m.asr) + m.tpr + (1.0 - m.fpr)) / 4.0;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Pools data = build_datasets(cfg);
  PartitionPlan plan = dirichlet_partition(
      data.train, cfg.total_clients, cfg.alpha, derive_seed(cfg.seed, 11, 0));

  Rng init_rng(derive_seed(cfg.seed, 12, 0));
  Model global = make_model(cfg.architecture, data.train.channels, data.train.h,
                            data.train.w, data.train.num_classes, init_rng);

  ExperimentResult res;
  for (int r = 0; r < cfg.rounds; ++r) {
    // Scheduled attacker slots rotate round-robin; the benign fill is a
    // seeded draw from the benign pool. The schedule is identical whether or
    // not an attack is configured, so attack and no-attack runs at one seed
    // differ only in attacker behavior.
    std::vector<int> participants;
    if (cfg.attackers_per_round > 0) {
      for (size_t i = 0; i < cfg.attackers_per_round; ++i)
        participants.push_back(static_cast<int>(
            (static_cast<size_t>(r) * cfg.attackers_per_round + i) %
            cfg.attackers_total));
    }
    size_t benign_count = cfg.clients_per_round - cfg.attackers_per_round;
    if (benign_count > 0) {
      Rng sel(derive_seed(cfg.seed, 20, static_cast<uint64_t>(r)));
      size_t pool = cfg.total_clients - cfg.attackers_total;
      for (size_t i : sel.sample_without_replacement(pool, benign_count))
        participants.push_back(static_cast<int>(cfg.attackers_total + i));
    }
    std::sort(participants.begin(), participants.end());

    std::vector<double> prev_global = flatten_state(global);
    std::vector<LocalUpdate> updates;
    std::vector<bool> malicious;
    for (int id : participants) {
      uint64_t client_seed = derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(r),
                                         static_cast<uint64_t>(id));
      Dataset shard =
          subset(data.train, plan.assignment[static_cast<size_t>(id)]);
      bool is_attacker = cfg.attack.kind != AttackKind::None &&
                         static_cast<size_t>(id) < cfg.attackers_total;
      malicious.push_back(is_attacker);
      if (shard.size() == 0) {
        updates.push_back({id, prev_global});
        continue;
      }
      if (is_attacker) {
        TrainHyper hyper;
        hyper.epochs = cfg.local_epochs;
        hyper.lr = cfg.lr;
        hyper.batch_size = cfg.batch_size;
        hyper.seed = client_seed;
        hyper.clients_per_round = cfg.clients_per_round;
        hyper.attackers_per_round = cfg.attackers_per_round;
        updates.push_back(
            attacker_local_train(global, shard, cfg.attack, hyper, id));
      } else {
        Model local = global;
        Rng train_rng(derive_seed(client_seed, 2, 0));
        train_sgd(local, shard, cfg.local_epochs, cfg.lr, cfg.batch_size,
                  train_rng);
        updates.push_back({id, flatten_state(local)});
      }
    }

    DefenseOutcome outcome = run_defense(cfg, updates, global, prev_global);
    load_state(global, outcome.global_parameters);

    RoundReport rep;
    rep.round = r;
    rep.selected_ids = outcome.selected_ids;
    for (size_t i = 0; i < updates.size(); ++i) {
      bool kept = std::find(outcome.selected_ids.begin(),
                            outcome.selected_ids.end(),
                            updates[i].client_id) != outcome.selected_ids.end();
      if (!kept) rep.excluded_ids.push_back(updates[i].client_id);
      if (malicious[i]) {
        kept ? ++rep.fn : ++rep.tp;
      } else {
        kept ? ++rep.tn : ++rep.fp;
      }
    }
    rep.acc = evaluate(global, data.test.images, data.test.labels);
    rep.asr = compute_asr(global, data.test, cfg.attack.trigger);
    rep.diagnostic = digest_of(outcome);
    res.rounds.push_back(std::move(rep));
  }

  if (res.rounds.empty()) {
    res.metrics.acc = evaluate(global, data.test.images, data.test.labels);
    res.metrics.asr = compute_asr(global, data.test, cfg.attack.trigger);
  } else {
    res.metrics.acc = res.rounds.back().acc;
    res.metrics.asr = res.rounds.back().asr;
  }
  compute_tpr_fpr(res.rounds, res.metrics);
  res.metrics.cad = compute_cad(res.metrics, cfg.defense.name);

  if (!cfg.out_dir.empty()) emit_reports(cfg, res, cfg.out_dir);
  return res;
}

namespace {

std::string join_ids(const std::vector<int>& ids, char sep) {
  std::ostringstream o;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) o << sep;
    o << ids[i];
  }
  return o.str();
}

std::string ids_json(const std::vector<int>& ids) {
  return "[" + join_ids(ids, ',') + "]";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  f.flush();
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void emit_reports(const ExperimentConfig& cfg, const ExperimentResult& res,
                  const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory " + out_dir +
                             ": " + ec.message());

  std::ostringstream csv;
  csv << "round,acc,asr,tp,fp,tn,fn,selected_ids\n";
  for (const RoundReport& r : res.rounds)
    csv << r.round << ',' << fmt6(r.acc) << ',' << fmt6(r.asr) << ',' << r.tp
        << ',' << r.fp << ',' << r.tn << ',' << r.fn << ','
        << join_ids(r.selected_ids, ';') << '\n';
  write_file(out_dir + "/report.csv", csv.str());

  std::ostringstream js;
  js << "{\n";
  js << "  \"config\": " << config_to_json(cfg, 2) << ",\n";
  js << "  \"metrics\": {\n";
  js << "    \"acc\": " << fmt6(res.metrics.acc) << ",\n";
  js << "    \"asr\": " << fmt6(res.metrics.asr) << ",\n";
  js << "    \"tpr\": " << fmt6(res.metrics.tpr) << ",\n";
  js << "    \"fpr\": " << fmt6(res.metrics.fpr) << ",\n";
  js << "    \"cad\": " << fmt6(res.metrics.cad) << ",\n";
  js << "    \"tpr_defined\": " << (res.metrics.tpr_defined ? "true" : "false")
     << ",\n";
  js << "    \"fpr_defined\": " << (res.metrics.fpr_defined ? "true" : "false")
     << "\n";
  js << "  },\n";
  js << "  \"rounds\": [";
  for (size_t i = 0; i < res.rounds.size(); ++i) {
    const RoundReport& r = res.rounds[i];
    js << (i ? ",\n    " : "\n    ");
    js << "{\"round\": " << r.round << ", \"acc\": " << fmt6(r.acc)
       << ", \"asr\": " << fmt6(r.asr) << ", \"tp\": " << r.tp
       << ", \"fp\": " << r.fp << ", \"tn\": " << r.tn << ", \"fn\": " << r.fn
       << ", \"selected_ids\": " << ids_json(r.selected_ids)
       << ", \"excluded_ids\": " << ids_json(r.excluded_ids)
       << ", \"diagnostic\": \"" << r.diagnostic << "\"}";
  }
  js << (res.rounds.empty() ? "],\n" : "\n  ],\n");
  js << "  \"schema_notes\": "
        "\"tpr/fpr aggregate tp/fp/tn/fn counts over all rounds; a client "
        "counts as identified when the defense excludes it\"\n";
  js << "}\n";
  write_file(out_dir + "/report.json", js.str());
}

}  // namespace mars
