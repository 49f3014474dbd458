#include "mars/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mars {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& scope,
                         const std::set<std::string>& allowed) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw std::runtime_error("config: unknown key \"" + item.key() +
                               "\" in " + scope);
}

Corner corner_from_name(const std::string& name) {
  if (name == "bottom_right") return Corner::BottomRight;
  if (name == "bottom_left") return Corner::BottomLeft;
  if (name == "top_right") return Corner::TopRight;
  if (name == "top_left") return Corner::TopLeft;
  throw std::runtime_error("config: unknown trigger anchor \"" + name + "\"");
}

std::string corner_name(Corner c) {
  switch (c) {
    case Corner::BottomRight: return "bottom_right";
    case Corner::BottomLeft: return "bottom_left";
    case Corner::TopRight: return "top_right";
    case Corner::TopLeft: return "top_left";
  }
  return "bottom_right";
}

AttackedLayers attacked_layers_from_name(const std::string& name) {
  if (name == "all") return AttackedLayers::All;
  if (name == "fc_only") return AttackedLayers::FcOnly;
  if (name == "first_k_convs_plus_fc") return AttackedLayers::FirstKConvsPlusFc;
  throw std::runtime_error("config: unknown attacked_layers \"" + name + "\"");
}

std::string attacked_layers_name(AttackedLayers a) {
  switch (a) {
    case AttackedLayers::All: return "all";
    case AttackedLayers::FcOnly: return "fc_only";
    case AttackedLayers::FirstKConvsPlusFc: return "first_k_convs_plus_fc";
  }
  return "all";
}

void parse_trigger(const json& j, TriggerSpec& t) {
  reject_unknown_keys(j, "attack.trigger",
                      {"anchor", "patch_height", "patch_width", "pixel_value",
                       "target_label"});
  if (j.contains("anchor")) t.anchor = corner_from_name(j.at("anchor"));
  if (j.contains("patch_height")) t.patch_height = j.at("patch_height");
  if (j.contains("patch_width")) t.patch_width = j.at("patch_width");
  if (j.contains("pixel_value")) t.pixel_value = j.at("pixel_value");
  if (j.contains("target_label")) t.target_label = j.at("target_label");
}

void parse_attack(const json& j, AttackConfig& a) {
  reject_unknown_keys(j, "attack",
                      {"kind", "trigger", "poison_fraction", "scale_factor",
                       "lambda", "attacked_layers", "first_k_convs"});
  if (j.contains("kind")) a.kind = attack_kind_from_name(j.at("kind"));
  if (j.contains("trigger")) parse_trigger(j.at("trigger"), a.trigger);
  if (j.contains("poison_fraction")) a.poison_fraction = j.at("poison_fraction");
  if (j.contains("scale_factor")) {
    const json& s = j.at("scale_factor");
    if (s.is_string()) {
      if (s.get<std::string>() != "auto")
        throw std::runtime_error(
            "config: attack.scale_factor must be a number or \"auto\"");
      a.scale_auto = true;
    } else {
      a.scale_auto = false;
      a.scale_factor = s.get<double>();
    }
  }
  if (j.contains("lambda")) a.lambda = j.at("lambda");
  if (j.contains("attacked_layers"))
    a.attacked_layers = attacked_layers_from_name(j.at("attacked_layers"));
  if (j.contains("first_k_convs")) a.first_k_convs = j.at("first_k_convs");
}

void parse_dataset(const json& j, DatasetConfig& d) {
  reject_unknown_keys(j, "dataset",
                      {"kind", "classes", "per_class", "test_per_class",
                       "height", "width", "train_images", "train_labels",
                       "test_images", "test_labels"});
  if (j.contains("kind")) d.kind = j.at("kind");
  if (j.contains("classes")) d.classes = j.at("classes");
  if (j.contains("per_class")) d.per_class = j.at("per_class");
  if (j.contains("test_per_class")) d.test_per_class = j.at("test_per_class");
  if (j.contains("height")) d.height = j.at("height");
  if (j.contains("width")) d.width = j.at("width");
  if (j.contains("train_images")) d.train_images = j.at("train_images");
  if (j.contains("train_labels")) d.train_labels = j.at("train_labels");
  if (j.contains("test_images")) d.test_images = j.at("test_images");
  if (j.contains("test_labels")) d.test_labels = j.at("test_labels");
}

void parse_defense(const json& j, DefenseConfig& d) {
  reject_unknown_keys(j, "defense",
                      {"name", "kappa", "epsilon", "layer_policy", "metric",
                       "f", "m", "bound", "u"});
  if (j.contains("name")) d.name = j.at("name");
  if (j.contains("kappa")) d.kappa = j.at("kappa");
  if (j.contains("epsilon")) d.epsilon = j.at("epsilon");
  if (j.contains("layer_policy")) d.layer_policy = j.at("layer_policy");
  if (j.contains("metric")) d.metric = j.at("metric");
  if (j.contains("f")) d.krum_f = j.at("f");
  if (j.contains("m")) d.krum_m = j.at("m");
  if (j.contains("bound")) d.clip_bound = j.at("bound");
  if (j.contains("u")) d.clp_u = j.at("u");
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "none") return AttackKind::None;
  if (name == "mra") return AttackKind::Mra;
  if (name == "adaptive_be") return AttackKind::AdaptiveBe;
  if (name == "label_flip") return AttackKind::LabelFlip;
  throw std::runtime_error("config: unknown attack kind \"" + name + "\"");
}

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::None: return "none";
    case AttackKind::Mra: return "mra";
    case AttackKind::AdaptiveBe: return "adaptive_be";
    case AttackKind::LabelFlip: return "label_flip";
  }
  return "none";
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: JSON parse error: ") +
                             e.what());
  }
  reject_unknown_keys(
      j, "config root",
      {"seed", "total_clients", "attackers_total", "clients_per_round",
       "attackers_per_round", "rounds", "alpha", "dataset", "architecture",
       "local_epochs", "lr", "batch_size", "attack", "defense", "out_dir"});
  ExperimentConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("total_clients")) cfg.total_clients = j.at("total_clients");
    if (j.contains("attackers_total"))
      cfg.attackers_total = j.at("attackers_total");
    if (j.contains("clients_per_round"))
      cfg.clients_per_round = j.at("clients_per_round");
    if (j.contains("attackers_per_round"))
      cfg.attackers_per_round = j.at("attackers_per_round");
    if (j.contains("rounds")) cfg.rounds = j.at("rounds");
    if (j.contains("alpha")) cfg.alpha = j.at("alpha");
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
    if (j.contains("architecture")) cfg.architecture = j.at("architecture");
    if (j.contains("local_epochs")) cfg.local_epochs = j.at("local_epochs");
    if (j.contains("lr")) cfg.lr = j.at("lr");
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size");
    if (j.contains("attack")) parse_attack(j.at("attack"), cfg.attack);
    if (j.contains("defense")) parse_defense(j.at("defense"), cfg.defense);
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir");
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: bad field type: ") +
                             e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (cfg.total_clients < 1) fail("total_clients must be >= 1");
  if (cfg.clients_per_round < 1 || cfg.clients_per_round > cfg.total_clients)
    fail("clients_per_round must be in [1, total_clients]");
  if (cfg.attackers_total > cfg.total_clients)
    fail("attackers_total must be <= total_clients");
  if (cfg.attackers_per_round >
      std::min(cfg.attackers_total, cfg.clients_per_round))
    fail("attackers_per_round must be <= min(attackers_total, clients_per_round)");
  if (cfg.clients_per_round - cfg.attackers_per_round >
      cfg.total_clients - cfg.attackers_total)
    fail("not enough benign clients to fill a round");
  if (cfg.rounds < 0) fail("rounds must be >= 0");
  if (!(cfg.alpha > 0.0)) fail("alpha must be > 0");
  if (cfg.local_epochs < 1) fail("local_epochs must be >= 1");
  if (!(cfg.lr > 0.0)) fail("lr must be > 0");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");

  const DatasetConfig& d = cfg.dataset;
  if (d.kind == "synth") {
    if (d.classes < 2) fail("dataset.classes must be >= 2");
    if (d.per_class < 1) fail("dataset.per_class must be >= 1");
    if (d.test_per_class < 1) fail("dataset.test_per_class must be >= 1");
    if (d.height < 4 || d.width < 4) fail("dataset images must be >= 4x4");
  } else if (d.kind == "idx") {
    if (d.train_images.empty() || d.train_labels.empty() ||
        d.test_images.empty() || d.test_labels.empty())
      fail("dataset.kind idx requires train/test image and label paths");
  } else {
    fail("dataset.kind must be \"synth\" or \"idx\"");
  }
  if (cfg.architecture != "mlp-small" && cfg.architecture != "cnn-small")
    fail("architecture must be \"mlp-small\" or \"cnn-small\"");

  const AttackConfig& a = cfg.attack;
  if (a.kind != AttackKind::AdaptiveBe && a.lambda != 0.0)
    fail("attack.lambda must be 0 unless kind is adaptive_be");
  if (a.lambda < 0.0) fail("attack.lambda must be >= 0");
  if (a.poison_fraction < 0.0 || a.poison_fraction > 1.0)
    fail("attack.poison_fraction must be in [0,1]");
  if (!a.scale_auto && !(a.scale_factor > 0.0))
    fail("attack.scale_factor must be > 0 or \"auto\"");
  if (a.trigger.pixel_value < 0.0 || a.trigger.pixel_value > 1.0)
    fail("attack.trigger.pixel_value must be in [0,1]");
  if (a.trigger.target_label < 0 ||
      (d.kind == "synth" && a.trigger.target_label >= d.classes))
    fail("attack.trigger.target_label out of class range");
  if (d.kind == "synth" &&
      (a.trigger.patch_height > d.height || a.trigger.patch_width > d.width))
    fail("attack.trigger patch exceeds image bounds");
  if (a.attacked_layers == AttackedLayers::FirstKConvsPlusFc &&
      a.first_k_convs < 0)
    fail("attack.first_k_convs must be >= 0");

  const DefenseConfig& def = cfg.defense;
  if (def.name != "fed_avg" && def.name != "mars" && def.name != "mars_star" &&
      def.name != "multi_krum" && def.name != "norm_clip" &&
      def.name != "fed_clp")
    fail("unknown defense name \"" + def.name + "\"");
  if (!(def.kappa > 0.0) || def.kappa > 100.0)
    fail("defense.kappa must be in (0, 100]");
  if (!(def.epsilon > 0.0)) fail("defense.epsilon must be > 0");
  if (def.layer_policy != "conv_bn_only" && def.layer_policy != "all_layers")
    fail("defense.layer_policy must be conv_bn_only or all_layers");
  if (def.metric != "wasserstein" && def.metric != "euclidean" &&
      def.metric != "cosine")
    fail("defense.metric must be wasserstein, euclidean, or cosine");
  if (def.name == "mars" || def.name == "mars_star") {
    if (def.layer_policy == "conv_bn_only" && cfg.architecture == "mlp-small")
      fail("mars with conv_bn_only cannot analyze mlp-small (no conv/bn layers)");
  }
  if (def.name == "multi_krum") {
    size_t f = def.krum_f >= 0 ? static_cast<size_t>(def.krum_f)
                               : cfg.attackers_per_round;
    if (cfg.clients_per_round < f + 3)
      fail("multi_krum requires clients_per_round - f - 2 >= 1");
    if (def.krum_m == 0 ||
        (def.krum_m > 0 &&
         static_cast<size_t>(def.krum_m) > cfg.clients_per_round))
      fail("defense.m must be in [1, clients_per_round]");
  }
  if (!(def.clip_bound > 0.0)) fail("defense.bound must be > 0");
  if (!(def.clp_u > 0.0)) fail("defense.u must be > 0");
}

std::string config_to_json(const ExperimentConfig& cfg, int indent) {
  std::string pad(static_cast<size_t>(indent), ' ');
  std::string pad2 = pad + "  ";
  std::string pad3 = pad2 + "  ";
  std::ostringstream o;
  o << "{\n";
  o << pad2 << "\"seed\": " << cfg.seed << ",\n";
  o << pad2 << "\"total_clients\": " << cfg.total_clients << ",\n";
  o << pad2 << "\"attackers_total\": " << cfg.attackers_total << ",\n";
  o << pad2 << "\"clients_per_round\": " << cfg.clients_per_round << ",\n";
  o << pad2 << "\"attackers_per_round\": " << cfg.attackers_per_round << ",\n";
  o << pad2 << "\"rounds\": " << cfg.rounds << ",\n";
  o << pad2 << "\"alpha\": " << fmt6(cfg.alpha) << ",\n";
  o << pad2 << "\"dataset\": {\n";
  o << pad3 << "\"kind\": " << quote(cfg.dataset.kind) << ",\n";
  if (cfg.dataset.kind == "synth") {
    o << pad3 << "\"classes\": " << cfg.dataset.classes << ",\n";
    o << pad3 << "\"per_class\": " << cfg.dataset.per_class << ",\n";
    o << pad3 << "\"test_per_class\": " << cfg.dataset.test_per_class << ",\n";
    o << pad3 << "\"height\": " << cfg.dataset.height << ",\n";
    o << pad3 << "\"width\": " << cfg.dataset.width << "\n";
  } else {
    o << pad3 << "\"train_images\": " << quote(cfg.dataset.train_images)
      << ",\n";
    o << pad3 << "\"train_labels\": " << quote(cfg.dataset.train_labels)
      << ",\n";
    o << pad3 << "\"test_images\": " << quote(cfg.dataset.test_images) << ",\n";
    o << pad3 << "\"test_labels\": " << quote(cfg.dataset.test_labels) << "\n";
  }
  o << pad2 << "},\n";
  o << pad2 << "\"architecture\": " << quote(cfg.architecture) << ",\n";
  o << pad2 << "\"local_epochs\": " << cfg.local_epochs << ",\n";
  o << pad2 << "\"lr\": " << fmt6(cfg.lr) << ",\n";
  o << pad2 << "\"batch_size\": " << cfg.batch_size << ",\n";
  o << pad2 << "\"attack\": {\n";
  o << pad3 << "\"kind\": " << quote(attack_kind_name(cfg.attack.kind))
    << ",\n";
  o << pad3 << "\"trigger\": {\"anchor\": "
    << quote(corner_name(cfg.attack.trigger.anchor))
    << ", \"patch_height\": " << cfg.attack.trigger.patch_height
    << ", \"patch_width\": " << cfg.attack.trigger.patch_width
    << ", \"pixel_value\": " << fmt6(cfg.attack.trigger.pixel_value)
    << ", \"target_label\": " << cfg.attack.trigger.target_label << "},\n";
  o << pad3 << "\"poison_fraction\": " << fmt6(cfg.attack.poison_fraction)
    << ",\n";
  o << pad3 << "\"scale_factor\": "
    << (cfg.attack.scale_auto ? std::string("\"auto\"")
                              : fmt6(cfg.attack.scale_factor))
    << ",\n";
  o << pad3 << "\"lambda\": " << fmt6(cfg.attack.lambda) << ",\n";
  o << pad3 << "\"attacked_layers\": "
    << quote(attacked_layers_name(cfg.attack.attacked_layers)) << ",\n";
  o << pad3 << "\"first_k_convs\": " << cfg.attack.first_k_convs << "\n";
  o << pad2 << "},\n";
  o << pad2 << "\"defense\": {\n";
  o << pad3 << "\"name\": " << quote(cfg.defense.name) << ",\n";
  o << pad3 << "\"kappa\": " << fmt6(cfg.defense.kappa) << ",\n";
  o << pad3 << "\"epsilon\": " << fmt6(cfg.defense.epsilon) << ",\n";
  o << pad3 << "\"layer_policy\": " << quote(cfg.defense.layer_policy) << ",\n";
  o << pad3 << "\"metric\": " << quote(cfg.defense.metric) << ",\n";
  o << pad3 << "\"f\": " << cfg.defense.krum_f << ",\n";
  o << pad3 << "\"m\": " << cfg.defense.krum_m << ",\n";
  o << pad3 << "\"bound\": " << fmt6(cfg.defense.clip_bound) << ",\n";
  o << pad3 << "\"u\": " << fmt6(cfg.defense.clp_u) << "\n";
  o << pad2 << "},\n";
  o << pad2 << "\"out_dir\": " << quote(cfg.out_dir) << "\n";
  o << pad << "}";
  return o.str();
}

}  // namespace mars
