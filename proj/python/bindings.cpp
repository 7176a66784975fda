#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "metasgd/checkpoint.hpp"
#include "metasgd/experiment.hpp"
#include "metasgd/gradcheck.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_metasgd, m) {
  using namespace metasgd;
  m.doc() = "Meta-SGD, MAML, and LSTM learning-rate meta-learning experiments";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  m.def(
      "canonical_config",
      [](const std::string& text) { return serialize_config(parse_config_text(text)); },
      py::arg("text"), "Parse and validate a JSON config; returns it with every default filled");

  m.def(
      "config_hash", [](const std::string& text) { return config_hash(parse_config_text(text)); },
      py::arg("text"));

  m.def(
      "run_train",
      [](const std::string& config_text) {
        const RunArtifacts a = run_train(parse_config_text(config_text));
        py::dict d;
        d["train_log"] = a.train_log;
        d["checkpoint"] = a.checkpoint;
        d["eval_summary"] = a.eval_summary;
        return d;
      },
      py::arg("config_text"),
      "Meta-train, checkpoint, and meta-test; returns the artifact paths");

  m.def(
      "run_eval",
      [](const std::string& config_text, const std::string& checkpoint) {
        return run_eval(parse_config_text(config_text), checkpoint);
      },
      py::arg("config_text"), py::arg("checkpoint"),
      "Meta-test a saved checkpoint; returns the summary path");

  m.def(
      "evaluate_checkpoint",
      [](const std::string& config_text, const std::string& checkpoint) {
        const RunConfig cfg = parse_config_text(config_text);
        const MetaState state = state_from_checkpoint(load_checkpoint(checkpoint), cfg);
        py::list rows;
        for (const EvalRow& r : evaluate_state(cfg, state)) {
          py::dict d;
          d["setting"] = r.setting;
          d["mean"] = r.mean;
          d["ci95_half"] = r.ci95_half;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config_text"), py::arg("checkpoint"),
      "Meta-test rows as dicts instead of a CSV file");

  m.def(
      "gradcheck",
      [](const std::string& inject) {
        py::list out;
        for (const CheckResult& r : run_gradcheck(inject)) {
          py::dict d;
          d["suite"] = r.suite;
          d["worst"] = r.worst;
          d["max_rel_err"] = r.max_rel_err;
          d["tolerance"] = r.tolerance;
          d["pass"] = r.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("inject") = std::string(),
      "Gradient verification suites; inject names an op to corrupt via the test hook");

  m.def(
      "export_curve",
      [](const std::string& checkpoint, std::uint64_t task_seed) {
        std::ostringstream out;
        run_export_curve(checkpoint, task_seed, out);
        return out.str();
      },
      py::arg("checkpoint"), py::arg("task_seed") = 1,
      "Adaptation curve CSV text (x, y_true, y_pre, y_post) for one sine task");

  m.def(
      "checkpoint_arrays",
      [](const std::string& path) {
        py::dict d;
        for (const auto& [name, t] : load_checkpoint(path).items) {
          std::vector<double> values(t.numel());
          for (std::size_t i = 0; i < t.numel(); ++i) values[i] = t[i];
          d[py::str(name)] = py::make_tuple(t.dims(), values);
        }
        return d;
      },
      py::arg("path"), "All checkpoint arrays as name -> (dims, values)");
}
