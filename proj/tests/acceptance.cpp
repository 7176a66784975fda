// Acceptance gate: one [PASS]/[FAIL] line per criterion, exit 1 on any failure.
// Criterion numbers to run come from argv; no arguments runs everything.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metasgd/checkpoint.hpp"
#include "metasgd/experiment.hpp"
#include "metasgd/gradcheck.hpp"

using namespace metasgd;

namespace {

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void record(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << detail << std::endl;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("acceptance: cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::vector<EvalRow> read_summary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("acceptance: cannot open '" + path + "'");
  std::vector<EvalRow> rows;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    EvalRow row;
    std::string field;
    std::getline(ss, row.setting, ',');
    std::getline(ss, field, ',');
    row.mean = std::stod(field);
    std::getline(ss, field, ',');
    row.ci95_half = std::stod(field);
    rows.push_back(row);
  }
  return rows;
}

double row_mean(const std::vector<EvalRow>& rows, const std::string& setting) {
  for (const EvalRow& r : rows)
    if (r.setting == setting) return r.mean;
  throw ShapeError("acceptance: missing eval row '" + setting + "'");
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------

void check_gradients(bool do_first, bool do_second) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<CheckResult> results = run_gradcheck();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (do_first) {
    bool pass = secs < 60.0;
    std::string detail;
    for (const CheckResult& r : results) {
      if (r.suite == "quadratic") continue;
      pass = pass && r.pass;
      detail += r.suite + " " + fmt(r.max_rel_err) + " (tol " + fmt(r.tolerance) + "), ";
    }
    record(1, pass,
           "finite-difference and meta-gradient checks: " + detail + fmt(secs) + " s");
  }
  if (do_second) {
    for (const CheckResult& r : results) {
      if (r.suite != "quadratic") continue;
      record(2, r.pass, "quadratic closed-form oracle incl. first-order ablation: max rel err " +
                            fmt(r.max_rel_err) + " (tol " + fmt(r.tolerance) + ")");
    }
  }
}

void check_maml_reduction() {
  RunConfig a = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "metasgd", "seed": 1,
    "alpha.init": "constant", "alpha.constant": 0.01, "alpha.learn": false,
    "train.iterations": 100,
    "eval.curves": 2, "eval.repeats": 2, "eval.grid": 10,
    "output_dir": "acceptance_out/reduction_metasgd"
  })");
  RunConfig b = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "maml", "seed": 1,
    "maml.alpha": 0.01,
    "train.iterations": 100,
    "eval.curves": 2, "eval.repeats": 2, "eval.grid": 10,
    "output_dir": "acceptance_out/reduction_maml"
  })");
  const RunArtifacts ra = run_train(a);
  const RunArtifacts rb = run_train(b);

  const bool logs_equal = read_file(ra.train_log) == read_file(rb.train_log);
  const ParamSet ca = load_checkpoint(ra.checkpoint);
  const ParamSet cb = load_checkpoint(rb.checkpoint);
  bool theta_equal = true;
  for (const auto& [name, t] : cb.items) {
    if (name.rfind("param.theta.", 0) == 0 && !(t == ca.at(name))) theta_equal = false;
  }
  record(3, logs_equal && theta_equal,
         std::string("Meta-SGD with frozen alpha = 0.01 vs MAML over 100 iterations: ") +
             "per-iteration losses " + (logs_equal ? "bitwise equal" : "DIFFER") +
             ", final theta " + (theta_equal ? "bitwise equal" : "DIFFERS"));
}

void check_sine(bool do_four, bool do_five) {
  RunConfig metasgd = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "metasgd", "seed": 1,
    "output_dir": "acceptance_out/sine_metasgd"
  })");
  RunConfig maml = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "maml", "seed": 1, "maml.alpha": 0.01,
    "output_dir": "acceptance_out/sine_maml"
  })");
  RunConfig smoke = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "metasgd", "seed": 1,
    "train.iterations": 5000,
    "output_dir": "acceptance_out/sine_smoke"
  })");

  const std::vector<EvalRow> rows_m = read_summary(run_train(metasgd).eval_summary);
  const double m5 = row_mean(rows_m, "5-shot");

  if (do_four) {
    const std::vector<EvalRow> rows_b = read_summary(run_train(maml).eval_summary);
    const std::vector<EvalRow> rows_s = read_summary(run_train(smoke).eval_summary);
    const double b5 = row_mean(rows_b, "5-shot");
    const double s5 = row_mean(rows_s, "5-shot");
    const bool pass = m5 <= 1.2 && m5 < b5 && s5 <= 3.0;
    record(4, pass, "5-shot MSE: Meta-SGD " + fmt(m5) + " (need <= 1.2), MAML " + fmt(b5) +
                        " (need Meta-SGD < MAML), 5000-iteration smoke " + fmt(s5) +
                        " (need <= 3.0)");
  }
  if (do_five) {
    const double m10 = row_mean(rows_m, "10-shot");
    const double m20 = row_mean(rows_m, "20-shot");
    const bool pass = m5 >= m10 && m10 >= m20;
    record(5, pass, "meta-test MSE monotone over shots: 5-shot " + fmt(m5) + " >= 10-shot " +
                        fmt(m10) + " >= 20-shot " + fmt(m20));
  }
}

void check_lstm() {
  RunConfig cfg = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "lrlstm", "seed": 1,
    "train.iterations": 5000, "train.outer_lr": 0.003,
    "output_dir": "acceptance_out/lstm"
  })");

  const std::vector<EvalRow> rows0 = evaluate_state(cfg, init_state(cfg));
  const double before = rows0.front().mean;

  const RunArtifacts art = run_train(cfg);
  const double after = row_mean(read_summary(art.eval_summary), "5-shot");

  const MetaState trained = state_from_checkpoint(load_checkpoint(art.checkpoint), cfg);
  const ParamSet theta = subset_with_prefix(trained.params, "theta.");
  const ParamSet phi = subset_with_prefix(trained.params, "phi.");
  const std::size_t boundary = 2 * cfg.lstm_split_layer;

  bool rates_in_range = true;
  double rate_lo = cfg.lstm_beta, rate_hi = 0.0;
  Rng task_rng(99, 5);
  for (int i = 0; i < 20; ++i) {
    const FewShotTask task = sample_sine_task(cfg.sine, task_rng);
    ad::Tape tape;
    VarSet phiv = lift(tape, phi, false);
    VarSet th1 = lift(tape, subset_range(theta, 0, boundary), false);
    VarSet th2 = lift(tape, subset_range(theta, boundary, theta.size()), true);
    const AdaptResult r =
        lstm_adapt(phiv, th1, th2, make_mse_loss(cfg.model, task.train_x, task.train_y),
                   cfg.lstm_steps, cfg.lstm_beta, cfg.lstm_hidden, false);
    for (double rate : r.rates) {
      rates_in_range = rates_in_range && rate > 0.0 && rate < cfg.lstm_beta;
      rate_lo = std::min(rate_lo, rate);
      rate_hi = std::max(rate_hi, rate);
    }
  }

  const bool pass = rates_in_range && after * 2.0 <= before;
  record(6, pass, "LSTM rates in (0, " + fmt(cfg.lstm_beta) + "): observed [" + fmt(rate_lo) +
                      ", " + fmt(rate_hi) + "]; 5-shot MSE " + fmt(before) + " at iteration 0 -> " +
                      fmt(after) + " after 5000 iterations (need factor >= 2)");
}

void check_navigation() {
  RunConfig fixed = parse_config_text(R"({
    "experiment": "nav-fixed", "meta_learner": "metasgd", "seed": 9,
    "nav.gamma": 0.9,
    "output_dir": "acceptance_out/nav_fixed"
  })");
  RunConfig random = parse_config_text(R"({
    "experiment": "nav-random", "meta_learner": "metasgd", "seed": 9,
    "nav.gamma": 0.9,
    "output_dir": "acceptance_out/nav_random"
  })");

  const RunArtifacts fa = run_train(fixed);
  const MetaState fs = state_from_checkpoint(load_checkpoint(fa.checkpoint), fixed);
  const RlEvalResult fr = evaluate_nav(fixed, fs);

  const RunArtifacts rb = run_train(random);
  const MetaState rs = state_from_checkpoint(load_checkpoint(rb.checkpoint), random);
  const RlEvalResult rr = evaluate_nav(random, rs);

  double fixed_post = 0.0, random_post = 0.0;
  std::size_t improved = 0;
  for (std::size_t i = 0; i < fr.post_returns.size(); ++i) {
    fixed_post += fr.post_returns[i];
    if (fr.post_returns[i] > fr.pre_returns[i]) ++improved;
  }
  fixed_post /= static_cast<double>(fr.post_returns.size());
  for (double v : rr.post_returns) random_post += v;
  random_post /= static_cast<double>(rr.post_returns.size());
  const double frac =
      static_cast<double>(improved) / static_cast<double>(fr.post_returns.size());

  const bool pass = fixed_post >= -13.0 && frac >= 0.9 && fixed_post > random_post;
  record(7, pass, "fixed-start mean return " + fmt(fixed_post) + " over " +
                      std::to_string(fr.post_returns.size()) + " tasks (need >= -13); post > pre on " +
                      fmt(100.0 * frac) + "% (need >= 90%); random-start mean " + fmt(random_post) +
                      " (need fixed > random)");
}

void check_cluster() {
  RunConfig cfg = parse_config_text(R"({
    "experiment": "cluster", "meta_learner": "metasgd", "seed": 1,
    "cluster.dim": 4, "model.layers": [4, 40, 40, 5],
    "output_dir": "acceptance_out/cluster"
  })");
  const RunArtifacts art = run_train(cfg);
  const double acc = row_mean(read_summary(art.eval_summary), "accuracy");
  record(8, acc >= 0.95, "5-way 1-shot cluster accuracy after 10000 iterations: " + fmt(acc) +
                             " (need >= 0.95)");
}

void check_determinism() {
  RunConfig sine = parse_config_text(R"({
    "experiment": "sine", "meta_learner": "metasgd", "seed": 7,
    "train.iterations": 200,
    "eval.curves": 5, "eval.repeats": 3, "eval.grid": 20,
    "output_dir": "acceptance_out/determinism_sine"
  })");
  RunConfig nav = parse_config_text(R"({
    "experiment": "nav-fixed", "meta_learner": "metasgd", "seed": 9,
    "nav.gamma": 0.9, "nav.horizon": 20, "nav.n1": 2, "nav.n2": 2,
    "train.iterations": 3, "train.meta_batch": 2, "eval.tasks": 5,
    "output_dir": "acceptance_out/determinism_nav"
  })");

  bool pass = true;
  std::string detail;
  for (const RunConfig& cfg : {sine, nav}) {
    const RunArtifacts first = run_train(cfg);
    const std::string log1 = read_file(first.train_log);
    const std::string sum1 = read_file(first.eval_summary);
    const std::string ck1 = read_file(first.checkpoint);
    const RunArtifacts second = run_train(cfg);
    const bool same = read_file(second.train_log) == log1 &&
                      read_file(second.eval_summary) == sum1 &&
                      read_file(second.checkpoint) == ck1;
    pass = pass && same;
    detail += to_string(cfg.experiment) + (same ? " byte-identical" : " DIFFERS") + ", ";
  }
  record(9, pass, "double runs with identical config: " + detail.substr(0, detail.size() - 2));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  try {
    if (want(1) || want(2)) check_gradients(want(1), want(2));
    if (want(3)) check_maml_reduction();
    if (want(4) || want(5)) check_sine(want(4), want(5));
    if (want(6)) check_lstm();
    if (want(7)) check_navigation();
    if (want(8)) check_cluster();
    if (want(9)) check_determinism();
  } catch (const std::exception& e) {
    std::cout << "[FAIL] acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }

  bool all_pass = true;
  for (const Verdict& v : verdicts) all_pass = all_pass && v.pass;
  return all_pass ? 0 : 1;
}
