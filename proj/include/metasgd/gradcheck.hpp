#pragma once

#include <string>
#include <vector>

namespace metasgd {

struct CheckResult {
  std::string suite;
  std::string worst;  // check with the largest relative error
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Verifies the gradient engine end to end: central finite differences for
/// every op and loss, full meta-gradients (Meta-SGD, MAML, LSTM BPTT with
/// T=2, and the policy surrogate on frozen trajectories), and the quadratic
/// closed-form oracle including the first-order ablation. A non-empty
/// `inject_fault_op` routes through the autodiff test hook, which must make
/// the affected suite fail and name the op.
std::vector<CheckResult> run_gradcheck(const std::string& inject_fault_op = "");

}  // namespace metasgd
