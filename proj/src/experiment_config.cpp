#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gcdlab/error.hpp"
#include "gcdlab/experiment.hpp"
#include "gcdlab/format.hpp"

namespace gcdlab {

namespace {

int line_of(const YAML::Node& node) { return node.Mark().is_null() ? 0 : node.Mark().line + 1; }

template <typename T>
T read_scalar(const YAML::Node& node, const std::string& field, const char* expected) {
  if (!node.IsScalar()) throw ParseError(field + ": expected " + expected, line_of(node));
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError(field + ": expected " + expected + ", got '" + node.Scalar() + "'",
                     line_of(node));
  }
}

void read_into(const YAML::Node& n, const std::string& f, double& v) { v = read_scalar<double>(n, f, "a number"); }
void read_into(const YAML::Node& n, const std::string& f, int& v) { v = read_scalar<int>(n, f, "an integer"); }
void read_into(const YAML::Node& n, const std::string& f, bool& v) { v = read_scalar<bool>(n, f, "true or false"); }
void read_into(const YAML::Node& n, const std::string& f, std::uint64_t& v) {
  if (n.IsScalar() && !n.Scalar().empty() && n.Scalar().front() == '-') {
    throw ParseError(f + ": expected a non-negative integer", line_of(n));
  }
  v = read_scalar<std::uint64_t>(n, f, "a non-negative integer");
}
void read_into(const YAML::Node& n, const std::string& f, std::string& v) { v = read_scalar<std::string>(n, f, "a string"); }

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string text_of(double v) { return format_double(v); }
std::string text_of(int v) { return std::to_string(v); }
std::string text_of(bool v) { return v ? "true" : "false"; }
std::string text_of(std::uint64_t v) { return std::to_string(v); }
std::string text_of(const std::string& v) { return quote(v); }

// Field tables shared by the parser and the canonical writer. Each visitor receives
// (key, member reference).
template <typename Cfg, typename V>
void visit_train(Cfg& c, V&& v) {
  v("lambda", c.lambda);
  v("epsilon", c.epsilon);
  v("alpha", c.alpha);
  v("beta", c.beta);
  v("delta", c.delta);
  v("lambda_ler", c.lambda_ler);
  v("tau_u", c.tau_u);
  v("tau_c", c.tau_c);
  v("tau_s", c.tau_s);
  v("tau_t_start", c.tau_t_start);
  v("tau_t_end", c.tau_t_end);
  v("tau_t_warmup_epochs", c.tau_t_warmup_epochs);
  v("tau_o", c.tau_o);
  v("ler_detach_target", c.ler_detach_target);
  v("ema_momentum", c.ema_momentum);
  v("lr", c.lr0);
  v("momentum", c.momentum);
  v("weight_decay", c.weight_decay);
  v("epochs", c.epochs);
  v("batch_size", c.batch_size);
  v("lr_safety_grad_norm", c.lr_safety_grad_norm);
}

template <typename Cfg, typename V>
void visit_toggles(Cfg& t, V&& v) {
  v("ler", t.ler);
  v("map", t.map);
  v("dkl", t.dkl);
}

template <typename Cfg, typename V>
void visit_model(Cfg& c, V&& v) {
  v("hidden", c.hidden_dim);
  v("feat", c.feat_dim);
  v("proj", c.proj_dim);
}

template <typename Cfg, typename V>
void visit_augment(Cfg& c, V&& v) {
  v("strength", c.augment_strength);
  v("dropout", c.augment_dropout);
}

template <typename Spec, typename V>
void visit_synthetic(Spec& s, V&& v) {
  v("n_known", s.n_known);
  v("n_novel", s.n_novel);
  v("per_class", s.per_class);
  v("dim", s.dim);
  v("separation", s.separation);
  v("noise", s.noise);
  v("labeled_ratio", s.labeled_ratio);
}

// Reads the keys of a mapping section through `visit`, rejecting unknown keys.
template <typename Visit>
void read_section(const YAML::Node& node, const std::string& prefix, Visit&& visit) {
  if (node.IsNull()) return;
  if (!node.IsMap()) throw ParseError(prefix + ": expected a mapping", line_of(node));
  std::set<std::string> known;
  visit([&](const char* key, auto& member) {
    known.insert(key);
    if (const YAML::Node child = node[key]) read_into(child, prefix + "." + key, member);
  });
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (known.count(key) == 0) {
      throw ParseError("unknown key '" + prefix + "." + key + "'", line_of(kv.first));
    }
  }
}

template <typename Visit>
void write_section(std::ostringstream& out, const char* name, Visit&& visit) {
  out << name << ":\n";
  visit([&](const char* key, const auto& member) { out << "  " << key << ": " << text_of(member) << '\n'; });
}

template <typename T>
std::vector<T> read_list(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) throw ParseError(field + ": expected a list", line_of(node));
  std::vector<T> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    T value{};
    read_into(node[i], field + "[" + std::to_string(i) + "]", value);
    out.push_back(value);
  }
  return out;
}

template <typename T>
std::string flow_list(const std::vector<T>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += text_of(values[i]);
  }
  return out + "]";
}

void validate_experiment(const ExperimentConfig& cfg) {
  cfg.train.validate();
  const SyntheticSpec& s = cfg.dataset.synthetic;
  if (cfg.dataset.source == DatasetSpec::Source::synthetic) {
    if (s.n_known < 1) throw RangeError("constraint violated: dataset.n_known >= 1");
    if (s.n_novel < 0) throw RangeError("constraint violated: dataset.n_novel >= 0");
    if (s.per_class < 4) throw RangeError("constraint violated: dataset.per_class >= 4");
    if (s.dim < 1) throw RangeError("constraint violated: dataset.dim >= 1");
    if (!(s.separation > 0.0)) throw RangeError("constraint violated: dataset.separation > 0");
    if (!(s.noise > 0.0)) throw RangeError("constraint violated: dataset.noise > 0");
    if (!(s.labeled_ratio > 0.0 && s.labeled_ratio < 1.0)) {
      throw RangeError("constraint violated: 0 < dataset.labeled_ratio < 1");
    }
  } else if (cfg.dataset.csv_path.empty()) {
    throw RangeError("constraint violated: dataset.csv required when dataset.source is csv");
  }
  for (double b : cfg.sweep.beta) {
    if (!(b >= 0.0)) throw RangeError("constraint violated: sweep.beta entries >= 0");
  }
  for (double d : cfg.sweep.delta) {
    if (!(d > 0.0 && d <= 1.0)) throw RangeError("constraint violated: 0 < sweep.delta entries <= 1");
  }
  for (const auto& name : cfg.ablation) ablation_toggles(name);
  if (cfg.checkpoint_every < 0) throw RangeError("constraint violated: checkpoint_every >= 0");
  if (cfg.output_dir.empty()) throw RangeError("constraint violated: output_dir non-empty");
}

}  // namespace

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"simgcd", "dkl", "ler", "ler+map", "ler+map+dkl"};
  return names;
}

FeatureToggles ablation_toggles(const std::string& name) {
  if (name == "simgcd") return {false, false, false};
  if (name == "dkl") return {false, false, true};
  if (name == "ler") return {true, false, false};
  if (name == "ler+map") return {true, true, false};
  if (name == "ler+map+dkl") return {true, true, true};
  throw RangeError("unknown ablation '" + name + "' (expected simgcd, dkl, ler, ler+map, ler+map+dkl)");
}

ExperimentConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
  }
  ExperimentConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw ParseError("top level must be a mapping", line_of(root));

  static const std::set<std::string> top_keys = {"seed",  "output_dir", "checkpoint_every", "dataset",
                                                 "train", "toggles",    "model",            "augment",
                                                 "sweep", "ablation"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (top_keys.count(key) == 0) throw ParseError("unknown key '" + key + "'", line_of(kv.first));
  }

  if (const auto n = root["seed"]) read_into(n, "seed", cfg.train.seed);
  if (const auto n = root["output_dir"]) {
    std::string dir;
    read_into(n, "output_dir", dir);
    cfg.output_dir = dir;
  }
  if (const auto n = root["checkpoint_every"]) read_into(n, "checkpoint_every", cfg.checkpoint_every);

  if (const auto n = root["dataset"]) {
    if (!n.IsMap() && !n.IsNull()) throw ParseError("dataset: expected a mapping", line_of(n));
    std::string source = "synthetic";
    std::string csv;
    read_section(n, "dataset", [&](auto&& v) {
      v("source", source);
      v("csv", csv);
      visit_synthetic(cfg.dataset.synthetic, v);
    });
    if (source == "synthetic") {
      cfg.dataset.source = DatasetSpec::Source::synthetic;
    } else if (source == "csv") {
      cfg.dataset.source = DatasetSpec::Source::csv;
    } else {
      throw ParseError("dataset.source: expected synthetic or csv", line_of(n["source"]));
    }
    cfg.dataset.csv_path = csv;
  }
  if (const auto n = root["train"]) read_section(n, "train", [&](auto&& v) { visit_train(cfg.train, v); });
  if (const auto n = root["toggles"]) {
    read_section(n, "toggles", [&](auto&& v) { visit_toggles(cfg.train.toggles, v); });
  }
  if (const auto n = root["model"]) read_section(n, "model", [&](auto&& v) { visit_model(cfg.train, v); });
  if (const auto n = root["augment"]) {
    read_section(n, "augment", [&](auto&& v) { visit_augment(cfg.train, v); });
  }
  if (const auto n = root["sweep"]) {
    if (!n.IsMap()) throw ParseError("sweep: expected a mapping", line_of(n));
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (key == "beta") {
        cfg.sweep.beta = read_list<double>(kv.second, "sweep.beta");
      } else if (key == "delta") {
        cfg.sweep.delta = read_list<double>(kv.second, "sweep.delta");
      } else if (key == "seed") {
        cfg.sweep.seed = read_list<std::uint64_t>(kv.second, "sweep.seed");
      } else {
        throw ParseError("unknown key 'sweep." + key + "'", line_of(kv.first));
      }
    }
    if (cfg.sweep.beta.empty() && cfg.sweep.delta.empty() && cfg.sweep.seed.empty()) {
      throw RangeError("constraint violated: sweep section needs at least one non-empty list");
    }
  }
  if (const auto n = root["ablation"]) {
    cfg.ablation = read_list<std::string>(n, "ablation");
    if (cfg.ablation.empty()) throw RangeError("constraint violated: ablation list non-empty");
  }
  validate_experiment(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string serialize_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "seed: " << cfg.seed << '\n';
  write_section(out, "train", [&](auto&& v) { visit_train(cfg, v); });
  write_section(out, "toggles", [&](auto&& v) { visit_toggles(cfg.toggles, v); });
  write_section(out, "model", [&](auto&& v) { visit_model(cfg, v); });
  write_section(out, "augment", [&](auto&& v) { visit_augment(cfg, v); });
  return out.str();
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "output_dir: " << quote(cfg.output_dir.generic_string()) << '\n';
  out << "checkpoint_every: " << cfg.checkpoint_every << '\n';
  const std::string source = cfg.dataset.source == DatasetSpec::Source::csv ? "csv" : "synthetic";
  const std::string csv = cfg.dataset.csv_path.generic_string();
  write_section(out, "dataset", [&](auto&& v) {
    v("source", source);
    v("csv", csv);
    visit_synthetic(cfg.dataset.synthetic, v);
  });
  out << serialize_train_config(cfg.train);
  if (!cfg.sweep.beta.empty() || !cfg.sweep.delta.empty() || !cfg.sweep.seed.empty()) {
    out << "sweep:\n";
    if (!cfg.sweep.beta.empty()) out << "  beta: " << flow_list(cfg.sweep.beta) << '\n';
    if (!cfg.sweep.delta.empty()) out << "  delta: " << flow_list(cfg.sweep.delta) << '\n';
    if (!cfg.sweep.seed.empty()) out << "  seed: " << flow_list(cfg.sweep.seed) << '\n';
  }
  if (!cfg.ablation.empty()) out << "ablation: " << flow_list(cfg.ablation) << '\n';
  return out.str();
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_train_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace gcdlab
