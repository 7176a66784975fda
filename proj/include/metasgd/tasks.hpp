#pragma once

#include <functional>
#include <span>

#include "metasgd/rng.hpp"
#include "metasgd/tensor.hpp"

namespace metasgd {

struct FewShotTask {
  Tensor train_x, train_y;  // [m1 x d_in], [m1 x d_out]
  Tensor test_x, test_y;    // [m2 x d_in], [m2 x d_out]
  double amplitude = 0.0, frequency = 0.0, phase = 0.0;  // regression descriptor
};

struct SineTaskConfig {
  double amp_lo = 0.1, amp_hi = 5.0;
  double freq_lo = 0.8, freq_hi = 1.2;
  double phase_lo = 0.0, phase_hi = 3.14159265358979323846;
  double x_lo = -5.0, x_hi = 5.0;
  std::size_t shots = 5;
  std::size_t test_size = 10;
};

struct ClusterTaskConfig {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;  // test examples per class
  std::size_t dim = 2;
  double spread = 0.5;       // per-coordinate Gaussian sd around the center
  double center_lo = -5.0, center_hi = 5.0;
};

double eval_sine(double amplitude, double frequency, double phase, double x);

/// Draws (A, omega, b) uniformly from the configured ranges, then `shots`
/// train inputs and `test_size` test inputs uniformly from the input range.
FewShotTask sample_sine_task(const SineTaskConfig& cfg, Rng& rng);

/// Draws `ways` cluster centers uniformly in the center box, then per class
/// shots train and queries test points as center + N(0, spread^2 I).
/// Labels are one-hot rows; examples are grouped by class, train classes
/// first then test classes, in draw order.
FewShotTask sample_cluster_task(const ClusterTaskConfig& cfg, Rng& rng);

/// n evenly spaced points from lo to hi inclusive, as an [n x 1] column.
Tensor linspace_column(double lo, double hi, std::size_t n);

struct EvalStats {
  double mean = 0.0;
  double ci95_half = 0.0;  // 1.96 * stddev / sqrt(n); 0 when n < 2
};
EvalStats mean_ci95(std::span<const double> values);

/// Adapts on (train_x, train_y) and predicts at grid_x; returns [n x 1].
using RegressionAdapter =
    std::function<Tensor(const Tensor& train_x, const Tensor& train_y, const Tensor& grid_x)>;

/// Meta-test protocol: sample n_curves sine curves; for each, repeat
/// `repeats` times: draw `cfg.shots` train points, adapt, measure MSE of the
/// predictions on the evenly spaced inclusive grid of `test_points` inputs.
/// The per-curve score is the mean over repeats; returns mean and 95% CI
/// over the per-curve scores.
EvalStats evaluate_regression(const SineTaskConfig& cfg, const RegressionAdapter& adapt, Rng& rng,
                              std::size_t n_curves = 100, std::size_t test_points = 100,
                              std::size_t repeats = 100);

/// Adapts on the episode train set and returns test-set logits [m2 x ways].
using ClassificationAdapter =
    std::function<Tensor(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x)>;

/// Mean and 95% CI of per-episode test accuracy over n_tasks episodes.
EvalStats evaluate_classification(const ClusterTaskConfig& cfg, const ClassificationAdapter& adapt,
                                  Rng& rng, std::size_t n_tasks);

}  // namespace metasgd
