#include "metasgd/config.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace metasgd {

namespace {

using nlohmann::json;

ExperimentKind parse_experiment(const std::string& s) {
  if (s == "sine") return ExperimentKind::Sine;
  if (s == "cluster") return ExperimentKind::Cluster;
  if (s == "nav-fixed") return ExperimentKind::NavFixed;
  if (s == "nav-random") return ExperimentKind::NavRandom;
  throw ShapeError("config: invalid value '" + s + "' for key 'experiment'");
}

MetaLearnerKind parse_meta_learner(const std::string& s) {
  if (s == "metasgd") return MetaLearnerKind::MetaSgd;
  if (s == "maml") return MetaLearnerKind::Maml;
  if (s == "lrlstm") return MetaLearnerKind::LrLstm;
  throw ShapeError("config: invalid value '" + s + "' for key 'meta_learner'");
}

struct KeyReader {
  json obj;

  bool take(const std::string& key, json& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return false;
    out = *it;
    obj.erase(it);
    return true;
  }

  std::string str(const std::string& key, const std::string& def) {
    json v;
    if (!take(key, v)) return def;
    if (!v.is_string()) throw ShapeError("config: key '" + key + "' must be a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool def) {
    json v;
    if (!take(key, v)) return def;
    if (!v.is_boolean()) throw ShapeError("config: key '" + key + "' must be a boolean");
    return v.get<bool>();
  }

  double real(const std::string& key, double def) {
    json v;
    if (!take(key, v)) return def;
    if (!v.is_number()) throw ShapeError("config: key '" + key + "' must be a number");
    return v.get<double>();
  }

  std::uint64_t uint(const std::string& key, std::uint64_t def) {
    json v;
    if (!take(key, v)) return def;
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
      throw ShapeError("config: key '" + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  std::vector<std::size_t> layer_list(const std::string& key, std::vector<std::size_t> def) {
    json v;
    if (!take(key, v)) return def;
    if (!v.is_array() || v.size() < 2)
      throw ShapeError("config: key '" + key + "' must be an array of at least two widths");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 1)
        throw ShapeError("config: key '" + key + "' entries must be positive integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }
};

void cross_validate(const RunConfig& cfg) {
  const auto& layers = cfg.model.layers;
  switch (cfg.experiment) {
    case ExperimentKind::Sine:
      if (layers.front() != 1 || layers.back() != 1)
        throw ShapeError("config: 'model.layers' must map 1 input to 1 output for sine");
      break;
    case ExperimentKind::Cluster:
      if (layers.front() != cfg.cluster.dim || layers.back() != cfg.cluster.ways)
        throw ShapeError(
            "config: 'model.layers' must map cluster.dim inputs to cluster.ways outputs");
      break;
    case ExperimentKind::NavFixed:
    case ExperimentKind::NavRandom:
      if (layers.front() != 2 || layers.back() != 2)
        throw ShapeError("config: 'model.layers' must map 2 inputs to 2 outputs for navigation");
      if (cfg.meta_learner == MetaLearnerKind::LrLstm)
        throw ShapeError("config: 'meta_learner' lrlstm is not supported for navigation");
      break;
  }
  if (!(cfg.train.outer_lr > 0.0)) throw ShapeError("config: 'train.outer_lr' must be positive");
  if (cfg.train.lambda < 0.0) throw ShapeError("config: 'train.lambda' must be nonnegative");
  if (cfg.train.meta_batch == 0) throw ShapeError("config: 'train.meta_batch' must be positive");
  if (cfg.train.log_interval == 0) throw ShapeError("config: 'train.log_interval' must be positive");
  if (cfg.alpha_init != "uniform" && cfg.alpha_init != "constant")
    throw ShapeError("config: 'alpha.init' must be \"uniform\" or \"constant\"");
  if (cfg.alpha_init == "constant" && !std::isfinite(cfg.alpha_constant))
    throw ShapeError("config: 'alpha.constant' must be finite");
  if (!(cfg.maml_alpha > 0.0)) throw ShapeError("config: 'maml.alpha' must be positive");
  if (cfg.sine.shots == 0 || cfg.sine.test_size == 0)
    throw ShapeError("config: 'sine.shots' and 'sine.test_size' must be positive");
  if (cfg.cluster.ways < 2) throw ShapeError("config: 'cluster.ways' must be at least 2");
  if (cfg.cluster.shots == 0 || cfg.cluster.queries == 0 || cfg.cluster.dim == 0)
    throw ShapeError("config: cluster counts must be positive");
  if (cfg.cluster.spread < 0.0) throw ShapeError("config: 'cluster.spread' must be nonnegative");
  if (cfg.nav_n1 == 0 || cfg.nav_n2 == 0)
    throw ShapeError("config: 'nav.n1' and 'nav.n2' must be positive");
  if (!(cfg.nav_gamma >= 0.0 && cfg.nav_gamma <= 1.0))
    throw ShapeError("config: 'nav.gamma' must be in [0, 1]");
  if (cfg.nav_horizon == 0) throw ShapeError("config: 'nav.horizon' must be positive");
  if (!(cfg.nav_threshold > 0.0)) throw ShapeError("config: 'nav.threshold' must be positive");
  if (cfg.lstm_hidden == 0) throw ShapeError("config: 'lstm.hidden' must be positive");
  if (!(cfg.lstm_beta > 0.0)) throw ShapeError("config: 'lstm.beta' must be positive");
  if (cfg.lstm_steps < 1) throw ShapeError("config: 'lstm.steps' must be at least 1");
  if (cfg.lstm_split_layer >= layers.size() - 1)
    throw ShapeError("config: 'lstm.split_layer' must leave theta2 nonempty");
  if (cfg.inner_steps < 0) throw ShapeError("config: 'train.inner_steps' must be nonnegative");
  if (cfg.eval_curves == 0 || cfg.eval_repeats == 0 || cfg.eval_grid < 2 || cfg.eval_tasks == 0)
    throw ShapeError("config: eval counts must be positive (grid at least 2)");
}

}  // namespace

std::string to_string(ExperimentKind e) {
  switch (e) {
    case ExperimentKind::Sine: return "sine";
    case ExperimentKind::Cluster: return "cluster";
    case ExperimentKind::NavFixed: return "nav-fixed";
    case ExperimentKind::NavRandom: return "nav-random";
  }
  return "sine";
}

std::string to_string(MetaLearnerKind m) {
  switch (m) {
    case MetaLearnerKind::MetaSgd: return "metasgd";
    case MetaLearnerKind::Maml: return "maml";
    case MetaLearnerKind::LrLstm: return "lrlstm";
  }
  return "metasgd";
}

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ShapeError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ShapeError("config: top level must be a JSON object");

  KeyReader r{root};
  RunConfig cfg;
  cfg.experiment = parse_experiment(r.str("experiment", "sine"));
  cfg.meta_learner = parse_meta_learner(r.str("meta_learner", "metasgd"));
  cfg.seed = r.uint("seed", 1);
  cfg.output_dir = r.str("output_dir", "out");

  // Experiment-dependent defaults (paper settings for sine and navigation).
  std::vector<std::size_t> default_layers;
  switch (cfg.experiment) {
    case ExperimentKind::Sine:
      default_layers = {1, 40, 40, 1};
      cfg.train.iterations = 60000;
      cfg.train.meta_batch = 4;
      cfg.eval_tasks = 200;
      break;
    case ExperimentKind::Cluster:
      default_layers = {2, 40, 40, 5};
      cfg.train.iterations = 10000;
      cfg.train.meta_batch = 4;
      cfg.eval_tasks = 200;
      break;
    case ExperimentKind::NavFixed:
    case ExperimentKind::NavRandom:
      default_layers = {2, 100, 100, 2};
      cfg.train.iterations = 100;
      cfg.train.meta_batch = 20;
      cfg.eval_tasks = 600;
      break;
  }

  cfg.model.layers = r.layer_list("model.layers", default_layers);
  const std::string act = r.str("model.activation", "relu");
  if (act == "relu")
    cfg.model.hidden = Activation::Relu;
  else if (act == "tanh")
    cfg.model.hidden = Activation::Tanh;
  else
    throw ShapeError("config: invalid value '" + act + "' for key 'model.activation'");

  cfg.train.iterations = r.uint("train.iterations", cfg.train.iterations);
  cfg.train.meta_batch = r.uint("train.meta_batch", cfg.train.meta_batch);
  cfg.train.outer_lr = r.real("train.outer_lr", 1e-3);
  const std::string opt = r.str("train.optimizer", "adam");
  if (opt == "adam")
    cfg.train.use_adam = true;
  else if (opt == "sgd")
    cfg.train.use_adam = false;
  else
    throw ShapeError("config: invalid value '" + opt + "' for key 'train.optimizer'");
  cfg.train.lambda = r.real("train.lambda", 0.0);
  cfg.first_order = r.boolean("train.first_order", false);
  cfg.inner_steps = static_cast<int>(r.uint("train.inner_steps", 1));
  cfg.train.log_interval = r.uint("train.log_interval", 1);

  cfg.alpha_init = r.str("alpha.init", "uniform");
  cfg.alpha_constant = r.real("alpha.constant", 0.01);
  cfg.alpha_learn = r.boolean("alpha.learn", true);
  cfg.maml_alpha = r.real("maml.alpha", 0.01);

  cfg.sine.shots = r.uint("sine.shots", 5);
  cfg.sine.test_size = r.uint("sine.test_size", 10);

  cfg.cluster.ways = r.uint("cluster.ways", 5);
  cfg.cluster.shots = r.uint("cluster.shots", 1);
  cfg.cluster.queries = r.uint("cluster.queries", 15);
  cfg.cluster.dim = r.uint("cluster.dim", 2);
  cfg.cluster.spread = r.real("cluster.spread", 0.5);

  cfg.nav_n1 = r.uint("nav.n1", 20);
  cfg.nav_n2 = r.uint("nav.n2", 20);
  cfg.nav_gamma = r.real("nav.gamma", 0.99);
  cfg.nav_horizon = r.uint("nav.horizon", 100);
  cfg.nav_threshold = r.real("nav.threshold", 0.01);

  cfg.lstm_hidden = r.uint("lstm.hidden", 20);
  cfg.lstm_beta = r.real("lstm.beta", 0.1);
  cfg.lstm_steps = static_cast<int>(r.uint("lstm.steps", 3));
  cfg.lstm_split_layer = r.uint("lstm.split_layer", cfg.model.layers.size() - 2);

  cfg.eval_curves = r.uint("eval.curves", 100);
  cfg.eval_repeats = r.uint("eval.repeats", 100);
  cfg.eval_grid = r.uint("eval.grid", 100);
  cfg.eval_tasks = r.uint("eval.tasks", cfg.eval_tasks);

  if (!r.obj.empty())
    throw ShapeError("config: unknown key '" + r.obj.begin().key() + "'");
  cross_validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::string serialize_config(const RunConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.experiment);
  j["meta_learner"] = to_string(cfg.meta_learner);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["model.layers"] = cfg.model.layers;
  j["model.activation"] = cfg.model.hidden == Activation::Relu ? "relu" : "tanh";
  j["train.iterations"] = cfg.train.iterations;
  j["train.meta_batch"] = cfg.train.meta_batch;
  j["train.outer_lr"] = cfg.train.outer_lr;
  j["train.optimizer"] = cfg.train.use_adam ? "adam" : "sgd";
  j["train.lambda"] = cfg.train.lambda;
  j["train.first_order"] = cfg.first_order;
  j["train.inner_steps"] = cfg.inner_steps;
  j["train.log_interval"] = cfg.train.log_interval;
  j["alpha.init"] = cfg.alpha_init;
  j["alpha.constant"] = cfg.alpha_constant;
  j["alpha.learn"] = cfg.alpha_learn;
  j["maml.alpha"] = cfg.maml_alpha;
  j["sine.shots"] = cfg.sine.shots;
  j["sine.test_size"] = cfg.sine.test_size;
  j["cluster.ways"] = cfg.cluster.ways;
  j["cluster.shots"] = cfg.cluster.shots;
  j["cluster.queries"] = cfg.cluster.queries;
  j["cluster.dim"] = cfg.cluster.dim;
  j["cluster.spread"] = cfg.cluster.spread;
  j["nav.n1"] = cfg.nav_n1;
  j["nav.n2"] = cfg.nav_n2;
  j["nav.gamma"] = cfg.nav_gamma;
  j["nav.horizon"] = cfg.nav_horizon;
  j["nav.threshold"] = cfg.nav_threshold;
  j["lstm.hidden"] = cfg.lstm_hidden;
  j["lstm.beta"] = cfg.lstm_beta;
  j["lstm.steps"] = cfg.lstm_steps;
  j["lstm.split_layer"] = cfg.lstm_split_layer;
  j["eval.curves"] = cfg.eval_curves;
  j["eval.repeats"] = cfg.eval_repeats;
  j["eval.grid"] = cfg.eval_grid;
  j["eval.tasks"] = cfg.eval_tasks;
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace metasgd
