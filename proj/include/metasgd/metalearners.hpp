#pragma once

#include <functional>
#include <vector>

#include "metasgd/models.hpp"

namespace metasgd {

/// Builds a scalar loss on the params' tape from the full learner parameter
/// set. Captures whatever task data it needs.
using LossBuilder = std::function<ad::Var(const VarSet& params)>;

LossBuilder make_mse_loss(const MlpSpec& spec, Tensor x, Tensor y);
LossBuilder make_ce_loss(const MlpSpec& spec, Tensor x, Tensor onehot_y);

struct AdaptResult {
  VarSet adapted;                   // full learner parameters after adaptation
  std::vector<double> train_losses; // one entry per inner step
  std::vector<double> rates;        // per-step learning rates (LSTM variant only)
};

/// One-or-more elementwise gradient steps theta' = theta - alpha * grad.
/// With create_graph the inner gradient stays differentiable, so an outer
/// gradient over (theta, alpha) carries the second-order terms; without it
/// the inner gradient is treated as a constant (first-order ablation).
AdaptResult meta_sgd_adapt(const VarSet& theta, const VarSet& alpha, const LossBuilder& loss,
                           int inner_steps, bool create_graph);

/// Same loop with one shared constant rate: theta' = theta - alpha_scalar * grad.
AdaptResult maml_adapt(const VarSet& theta, double alpha_scalar, int inner_steps,
                       const LossBuilder& loss, bool create_graph);

/// One LSTM cell step plus the rate readout alpha = beta * sigmoid(w.h + b).
/// Input is the concatenation [theta2; loss; grad]; h and c are [1 x H] rows.
/// Cell parameters in phi: "wx" [D x 4H], "wh" [H x 4H], "b" [4H] with gate
/// blocks ordered (input, forget, output, candidate), readout "w_out" [H],
/// "b_out" scalar.
struct LstmStepResult {
  ad::Var alpha;  // scalar in (0, beta)
  ad::Var h;
  ad::Var c;
};
LstmStepResult lstm_lr_step(const VarSet& phi, const ad::Var& theta2_flat, const ad::Var& loss,
                            const ad::Var& grad_flat, const ad::Var& h_prev, const ad::Var& c_prev,
                            double beta, std::size_t hidden);

/// T inner steps on theta2 only (theta1 stays shared): at each step the cell
/// reads (theta2, loss, grad) and emits the step's learning rate. All steps
/// stay on the tape, so an outer gradient over (phi, theta1, theta2_init)
/// backpropagates through the whole unrolled sequence.
AdaptResult lstm_adapt(const VarSet& phi, const VarSet& theta1, const VarSet& theta2_init,
                       const LossBuilder& loss, int steps_T, double beta, std::size_t hidden,
                       bool create_graph);

/// Wx/Wh/w_out and non-forget biases uniform in [-0.1, 0.1]; the forget-gate
/// bias block starts at 1 so early cell states persist.
ParamSet init_lstm_phi(std::size_t input_dim, std::size_t hidden, Rng& rng);

/// Mean test loss of the adapted learner, on the adaptation tape.
ad::Var meta_loss(const AdaptResult& adapted, const LossBuilder& test_loss);

}  // namespace metasgd
