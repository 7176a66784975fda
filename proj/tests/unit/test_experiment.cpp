#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "metasgd/checkpoint.hpp"
#include "metasgd/experiment.hpp"

using namespace metasgd;

namespace {

std::string scratch_dir(const std::string& stem) {
  return "/tmp/metasgd_test_exp_" + std::to_string(::getpid()) + "/" + stem;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

struct DirGuard {
  std::string root = "/tmp/metasgd_test_exp_" + std::to_string(::getpid());
  ~DirGuard() {
    std::error_code ec;
    std::filesystem::remove_all(root, ec);
  }
};

RunConfig tiny_sine(const std::string& out, const std::string& learner) {
  return parse_config_text(R"({
    "experiment": "sine",
    "meta_learner": ")" + learner + R"(",
    "seed": 3,
    "output_dir": ")" + out + R"(",
    "train.iterations": 5,
    "train.meta_batch": 2,
    "eval.curves": 2,
    "eval.repeats": 2,
    "eval.grid": 10
  })");
}

}  // namespace

TEST_CASE("init_state lays out meta-sgd parameters with one shared alpha draw") {
  RunConfig cfg = tiny_sine(scratch_dir("unused"), "metasgd");
  MetaState st = init_state(cfg);

  REQUIRE(st.params.size() == 12);
  CHECK(st.params.items[0].first == "theta.w0");
  CHECK(st.params.items[5].first == "theta.b2");
  CHECK(st.params.items[6].first == "alpha.w0");
  CHECK(st.params.items[11].first == "alpha.b2");
  CHECK(st.frozen.size() == 0);
  CHECK(st.opt.m.size() == 12);
  CHECK(st.opt.step == 0);
  CHECK(st.iteration == 0);

  const double a0 = st.params.at("alpha.w0")[0];
  CHECK(a0 >= 0.005);
  CHECK(a0 <= 0.1);
  for (const auto& [name, t] : st.params.items) {
    if (name.rfind("alpha.", 0) != 0) continue;
    for (double v : t.data()) CHECK(v == a0);
  }

  MetaState again = init_state(cfg);
  for (std::size_t i = 0; i < st.params.size(); ++i)
    CHECK(st.params.items[i].second == again.params.items[i].second);
}

TEST_CASE("init_state honors alpha.learn false and the constant init") {
  RunConfig cfg = parse_config_text(R"({
    "experiment": "sine",
    "alpha.learn": false,
    "alpha.init": "constant",
    "alpha.constant": 0.02
  })");
  MetaState st = init_state(cfg);
  CHECK(st.params.size() == 6);
  CHECK(st.frozen.size() == 6);
  CHECK(st.frozen.items[0].first == "alpha.w0");
  for (const auto& [name, t] : st.frozen.items)
    for (double v : t.data()) CHECK(v == 0.02);
}

TEST_CASE("init_state for maml, lstm, and navigation learners") {
  RunConfig maml = parse_config_text(R"({"experiment": "sine", "meta_learner": "maml"})");
  MetaState m = init_state(maml);
  CHECK(m.params.size() == 6);
  CHECK(m.frozen.size() == 0);

  RunConfig lstm = parse_config_text(R"({"experiment": "sine", "meta_learner": "lrlstm"})");
  MetaState l = init_state(lstm);
  // theta2 = final layer (40 weights + 1 bias), cell input is [theta2; loss; grad].
  CHECK(l.params.at("phi.wx").dims() == std::vector<std::size_t>{2 * 41 + 1, 80});
  CHECK(l.params.at("phi.wh").dims() == std::vector<std::size_t>{20, 80});
  CHECK(l.params.at("phi.w_out").dims() == std::vector<std::size_t>{20});

  RunConfig nav = parse_config_text(R"({"experiment": "nav-fixed", "seed": 9})");
  MetaState n = init_state(nav);
  CHECK(n.params.has("theta.log_var"));
  CHECK(n.params.at("theta.log_var") == Tensor::zeros({2}));
  CHECK(n.params.has("alpha.log_var"));
}

TEST_CASE("meta-sgd with frozen constant alpha reproduces maml bitwise") {
  DirGuard guard;
  RunConfig a = parse_config_text(R"({
    "experiment": "sine",
    "meta_learner": "metasgd",
    "alpha.init": "constant",
    "alpha.constant": 0.01,
    "alpha.learn": false,
    "seed": 5,
    "output_dir": ")" + scratch_dir("red_a") + R"(",
    "train.iterations": 10,
    "train.meta_batch": 2,
    "eval.curves": 2,
    "eval.repeats": 2,
    "eval.grid": 10
  })");
  RunConfig b = parse_config_text(R"({
    "experiment": "sine",
    "meta_learner": "maml",
    "maml.alpha": 0.01,
    "seed": 5,
    "output_dir": ")" + scratch_dir("red_b") + R"(",
    "train.iterations": 10,
    "train.meta_batch": 2,
    "eval.curves": 2,
    "eval.repeats": 2,
    "eval.grid": 10
  })");
  RunArtifacts ra = run_train(a);
  RunArtifacts rb = run_train(b);
  ParamSet ca = load_checkpoint(ra.checkpoint);
  ParamSet cb = load_checkpoint(rb.checkpoint);
  for (const auto& [name, t] : cb.items) {
    if (name.rfind("param.theta.", 0) == 0) CHECK(t == ca.at(name));
  }
  CHECK(read_file(ra.train_log) == read_file(rb.train_log));
  CHECK(read_file(ra.eval_summary) == read_file(rb.eval_summary));
}

TEST_CASE("run_train writes the expected artifact shapes") {
  DirGuard guard;
  RunConfig cfg = tiny_sine(scratch_dir("shapes"), "metasgd");
  RunArtifacts art = run_train(cfg);

  const std::string log = read_file(art.train_log);
  CHECK(line_count(log) == 1 + 5);
  CHECK(log.rfind("iteration,mean_test_loss_or_return,wall_ms\n", 0) == 0);

  const std::string summary = read_file(art.eval_summary);
  CHECK(line_count(summary) == 1 + 3);
  CHECK(summary.rfind("setting,mean,ci95_half\n", 0) == 0);
  CHECK(summary.find("5-shot,") != std::string::npos);
  CHECK(summary.find("20-shot,") != std::string::npos);

  ParamSet ck = load_checkpoint(art.checkpoint);
  CHECK(ck.has("param.theta.w0"));
  CHECK(ck.has("adam.m.theta.w0"));
  CHECK(ck.has("adam.v.alpha.b2"));
  CHECK(ck.at("adam.step").item() == 5.0);
  CHECK(ck.at("meta.iteration").item() == 5.0);
  CHECK(ck.has("meta.config_hash"));
  RunConfig embedded = config_from_checkpoint(ck);
  CHECK(serialize_config(embedded) == serialize_config(cfg));
}

TEST_CASE("identical configs produce byte-identical artifacts") {
  DirGuard guard;
  RunConfig cfg = tiny_sine(scratch_dir("det"), "metasgd");
  RunArtifacts first = run_train(cfg);
  const std::string log1 = read_file(first.train_log);
  const std::string sum1 = read_file(first.eval_summary);
  const std::string ck1 = read_file(first.checkpoint);
  RunArtifacts second = run_train(cfg);
  CHECK(read_file(second.train_log) == log1);
  CHECK(read_file(second.eval_summary) == sum1);
  CHECK(read_file(second.checkpoint) == ck1);
}

TEST_CASE("run_eval reproduces the training run's summary bytes") {
  DirGuard guard;
  RunConfig cfg = tiny_sine(scratch_dir("reval"), "metasgd");
  RunArtifacts art = run_train(cfg);
  const std::string expected = read_file(art.eval_summary);

  RunConfig eval_cfg = cfg;
  eval_cfg.output_dir = scratch_dir("reval_out");
  const std::string path = run_eval(eval_cfg, art.checkpoint);
  CHECK(read_file(path) == expected);
}

TEST_CASE("state round-trips through the checkpoint array form") {
  RunConfig cfg = parse_config_text(R"({"experiment": "cluster", "seed": 11})");
  MetaState st = init_state(cfg);
  st.iteration = 7;
  st.opt.step = 7;
  st.opt.m[0][0] = 0.125;

  ParamSet arrays = state_to_checkpoint(st, cfg);
  MetaState back = state_from_checkpoint(arrays, cfg);
  CHECK(back.iteration == 7);
  CHECK(back.opt.step == 7);
  CHECK(back.opt.m[0][0] == 0.125);
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    CHECK(back.params.items[i].first == st.params.items[i].first);
    CHECK(back.params.items[i].second == st.params.items[i].second);
  }
}

TEST_CASE("export-curve emits the grid with true sine values") {
  DirGuard guard;
  RunConfig cfg = tiny_sine(scratch_dir("curve"), "metasgd");
  RunArtifacts art = run_train(cfg);

  std::ostringstream out;
  run_export_curve(art.checkpoint, 123, out);
  const std::string text = out.str();
  CHECK(text.rfind("x,y_true,y_pre,y_post\n", 0) == 0);
  CHECK(line_count(text) == 1 + 10);
  CHECK(text.find("\n-5,") != std::string::npos);
  CHECK(text.substr(text.size() - 1) == "\n");

  std::ostringstream again;
  run_export_curve(art.checkpoint, 123, again);
  CHECK(again.str() == text);
}

TEST_CASE("tiny navigation run trains, checkpoints, and evaluates") {
  DirGuard guard;
  RunConfig cfg = parse_config_text(R"({
    "experiment": "nav-fixed",
    "seed": 9,
    "output_dir": ")" + scratch_dir("nav") + R"(",
    "nav.gamma": 0.9,
    "nav.horizon": 20,
    "nav.n1": 2,
    "nav.n2": 2,
    "train.iterations": 2,
    "train.meta_batch": 2,
    "eval.tasks": 3
  })");
  RunArtifacts art = run_train(cfg);
  const std::string summary = read_file(art.eval_summary);
  CHECK(line_count(summary) == 1 + 2);
  CHECK(summary.find("pre-adaptation,") != std::string::npos);
  CHECK(summary.find("post-adaptation,") != std::string::npos);

  ParamSet ck = load_checkpoint(art.checkpoint);
  MetaState st = state_from_checkpoint(ck, cfg);
  RlEvalResult r = evaluate_nav(cfg, st);
  CHECK(r.pre_returns.size() == 3);
  CHECK(r.post_returns.size() == 3);
  for (double v : r.pre_returns) CHECK(v <= 0.0);
}
