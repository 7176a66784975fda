#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "metasgd/experiment.hpp"
#include "metasgd/gradcheck.hpp"

namespace {

int print_gradcheck(const std::vector<metasgd::CheckResult>& results) {
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-10s max rel err %.3e (worst: %s, tol %.0e) %s\n", r.suite.c_str(),
                r.max_rel_err, r.worst.c_str(), r.tolerance, r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-SGD: meta-learned initialization and per-parameter learning rates"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, inject_op;
  std::uint64_t task_seed = 1;

  CLI::App* train = app.add_subcommand("train", "Meta-train, checkpoint, and meta-test");
  train->add_option("config", config_path, "JSON config file")->required();

  CLI::App* eval = app.add_subcommand("eval", "Meta-test a saved checkpoint");
  eval->add_option("config", config_path, "JSON config file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint.bin to evaluate")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference and closed-form gradient verification");
  gradcheck->add_option("--inject", inject_op,
                        "corrupt the named op's backward pass (demonstrates fault detection)");

  CLI::App* export_curve =
      app.add_subcommand("export-curve", "Adaptation curve data for one sampled sine task");
  export_curve->add_option("checkpoint", checkpoint_path, "checkpoint.bin of a sine run")
      ->required();
  export_curve->add_option("--task-seed", task_seed, "seed selecting the task");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const metasgd::RunConfig cfg = metasgd::parse_config(config_path);
      const auto start = std::chrono::steady_clock::now();
      const metasgd::RunArtifacts out = metasgd::run_train(cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("trained %zu iterations in %.1f s\n", cfg.train.iterations, secs);
      std::printf("wrote %s\n", out.train_log.c_str());
      std::printf("wrote %s\n", out.checkpoint.c_str());
      std::printf("wrote %s\n", out.eval_summary.c_str());
    } else if (*eval) {
      const metasgd::RunConfig cfg = metasgd::parse_config(config_path);
      std::printf("wrote %s\n", metasgd::run_eval(cfg, checkpoint_path).c_str());
    } else if (*gradcheck) {
      return print_gradcheck(metasgd::run_gradcheck(inject_op));
    } else if (*export_curve) {
      metasgd::run_export_curve(checkpoint_path, task_seed, std::cout);
    }
  } catch (const metasgd::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const metasgd::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const metasgd::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
