#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "metasgd/config.hpp"
#include "metasgd/csv.hpp"
#include "metasgd/train.hpp"

namespace metasgd {

/// Meta-parameters plus optimizer state. `params` holds the meta-updated
/// tensors under prefixed names (theta.*, alpha.*, phi.*); `frozen` holds
/// stored-but-not-updated tensors (the rate vector when alpha.learn is
/// false).
struct MetaState {
  ParamSet params;
  ParamSet frozen;
  AdamState opt;
  std::size_t iteration = 0;
};

/// Fresh meta-parameters for the configured learner. Stream 1 initializes
/// theta, stream 2 the extras (rate vector draw or LSTM cell weights).
MetaState init_state(const RunConfig& cfg);

/// Checkpoint layout: param.<name>, frozen.<name>, adam.m.<name>,
/// adam.v.<name>, adam.step, meta.iteration, meta.config_hash, and
/// meta.config (the canonical config JSON, one byte per element).
ParamSet state_to_checkpoint(const MetaState& state, const RunConfig& cfg);
MetaState state_from_checkpoint(const ParamSet& arrays, const RunConfig& cfg);
RunConfig config_from_checkpoint(const ParamSet& arrays);

/// Meta-test for the configured experiment: sine reports 5/10/20-shot MSE
/// rows, cluster one accuracy row, navigation pre- and post-adaptation mean
/// returns. Task draws use stream 5, evaluation rollouts stream 6.
std::vector<EvalRow> evaluate_state(const RunConfig& cfg, const MetaState& state);

/// Per-task returns behind the navigation summary rows.
RlEvalResult evaluate_nav(const RunConfig& cfg, const MetaState& state);

struct RunArtifacts {
  std::string train_log;
  std::string eval_summary;
  std::string checkpoint;
};

/// Trains from scratch (task stream 3, training rollouts stream 4), writes
/// train_log.csv and checkpoint.bin, then runs the meta-test and writes
/// eval_summary.csv, all under cfg.output_dir.
RunArtifacts run_train(const RunConfig& cfg);

/// Meta-tests a saved checkpoint and writes eval_summary.csv; with the
/// training run's config this reproduces its summary byte for byte.
std::string run_eval(const RunConfig& cfg, const std::string& checkpoint_path);

/// Adaptation curve data for one sampled sine task (task stream 5 seeded
/// with task_seed): columns x, y_true, y_pre, y_post on the evaluation grid.
void run_export_curve(const std::string& checkpoint_path, std::uint64_t task_seed,
                      std::ostream& out);

}  // namespace metasgd
