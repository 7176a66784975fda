#pragma once

#include <cstdint>
#include <string>

#include "metasgd/models.hpp"
#include "metasgd/rl.hpp"
#include "metasgd/tasks.hpp"
#include "metasgd/train.hpp"

namespace metasgd {

enum class ExperimentKind { Sine, Cluster, NavFixed, NavRandom };
enum class MetaLearnerKind { MetaSgd, Maml, LrLstm };

std::string to_string(ExperimentKind e);
std::string to_string(MetaLearnerKind m);

/// Fully resolved run settings. Defaults depend on the experiment; see
/// parse_config.
struct RunConfig {
  ExperimentKind experiment = ExperimentKind::Sine;
  MetaLearnerKind meta_learner = MetaLearnerKind::MetaSgd;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  MlpSpec model;
  MetaTrainConfig train;
  bool first_order = false;
  int inner_steps = 1;

  // Meta-SGD rate vector: drawn once uniformly from [0.005, 0.1] ("uniform")
  // or set to alpha_constant everywhere ("constant").
  std::string alpha_init = "uniform";
  double alpha_constant = 0.01;
  bool alpha_learn = true;

  double maml_alpha = 0.01;

  SineTaskConfig sine;
  ClusterTaskConfig cluster;

  std::size_t nav_n1 = 20, nav_n2 = 20, nav_horizon = 100;
  double nav_gamma = 0.99, nav_threshold = 0.01;

  std::size_t lstm_hidden = 20;
  double lstm_beta = 0.1;
  int lstm_steps = 3;
  std::size_t lstm_split_layer = 2;  // first layer index owned by theta2

  std::size_t eval_curves = 100, eval_repeats = 100, eval_grid = 100;
  std::size_t eval_tasks = 200;  // episodes (cluster) or tasks (navigation)
};

/// Reads a flat dotted-key JSON object, fills experiment-specific defaults,
/// and validates. Unknown keys and invalid values raise ShapeError naming
/// the key; a missing file raises IoError.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

/// Canonical JSON with every key explicit; parse_config_text inverts it.
std::string serialize_config(const RunConfig& cfg);

/// FNV-1a 64 over serialize_config(cfg).
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace metasgd
