#include "metasgd/tasks.hpp"

#include <cmath>

namespace metasgd {

double eval_sine(double amplitude, double frequency, double phase, double x) {
  return amplitude * std::sin(frequency * x + phase);
}

FewShotTask sample_sine_task(const SineTaskConfig& cfg, Rng& rng) {
  if (cfg.shots == 0 || cfg.test_size == 0)
    throw ShapeError("sample_sine_task: shots and test_size must be positive");
  FewShotTask task;
  task.amplitude = rng.uniform(cfg.amp_lo, cfg.amp_hi);
  task.frequency = rng.uniform(cfg.freq_lo, cfg.freq_hi);
  task.phase = rng.uniform(cfg.phase_lo, cfg.phase_hi);

  auto draw_set = [&](std::size_t m, Tensor& xs, Tensor& ys) {
    std::vector<double> x(m), y(m);
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = rng.uniform(cfg.x_lo, cfg.x_hi);
      y[i] = eval_sine(task.amplitude, task.frequency, task.phase, x[i]);
    }
    xs = Tensor::matrix(m, 1, std::move(x));
    ys = Tensor::matrix(m, 1, std::move(y));
  };
  draw_set(cfg.shots, task.train_x, task.train_y);
  draw_set(cfg.test_size, task.test_x, task.test_y);
  return task;
}

FewShotTask sample_cluster_task(const ClusterTaskConfig& cfg, Rng& rng) {
  if (cfg.ways < 2) throw ShapeError("sample_cluster_task: need at least two classes");
  if (cfg.shots == 0 || cfg.queries == 0 || cfg.dim == 0)
    throw ShapeError("sample_cluster_task: shots, queries, and dim must be positive");

  std::vector<std::vector<double>> centers(cfg.ways, std::vector<double>(cfg.dim));
  for (auto& center : centers)
    for (double& coord : center) coord = rng.uniform(cfg.center_lo, cfg.center_hi);

  auto draw_split = [&](std::size_t per_class, Tensor& xs, Tensor& ys) {
    const std::size_t m = per_class * cfg.ways;
    std::vector<double> x(m * cfg.dim), y(m * cfg.ways, 0.0);
    std::size_t row = 0;
    for (std::size_t cls = 0; cls < cfg.ways; ++cls) {
      for (std::size_t k = 0; k < per_class; ++k, ++row) {
        for (std::size_t d = 0; d < cfg.dim; ++d)
          x[row * cfg.dim + d] = centers[cls][d] + cfg.spread * rng.normal();
        y[row * cfg.ways + cls] = 1.0;
      }
    }
    xs = Tensor::matrix(m, cfg.dim, std::move(x));
    ys = Tensor::matrix(m, cfg.ways, std::move(y));
  };
  FewShotTask task;
  draw_split(cfg.shots, task.train_x, task.train_y);
  draw_split(cfg.queries, task.test_x, task.test_y);
  return task;
}

Tensor linspace_column(double lo, double hi, std::size_t n) {
  if (n < 2) throw ShapeError("linspace_column: need at least two points");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return Tensor::matrix(n, 1, std::move(x));
}

EvalStats mean_ci95(std::span<const double> values) {
  if (values.empty()) throw ShapeError("mean_ci95: empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  const double stderr_ = stddev / std::sqrt(static_cast<double>(values.size()));
  return {mean, 1.96 * stderr_};
}

EvalStats evaluate_regression(const SineTaskConfig& cfg, const RegressionAdapter& adapt, Rng& rng,
                              std::size_t n_curves, std::size_t test_points, std::size_t repeats) {
  if (n_curves == 0 || repeats == 0)
    throw ShapeError("evaluate_regression: n_curves and repeats must be positive");
  const Tensor grid = linspace_column(cfg.x_lo, cfg.x_hi, test_points);

  std::vector<double> per_curve(n_curves);
  for (std::size_t c = 0; c < n_curves; ++c) {
    const double amplitude = rng.uniform(cfg.amp_lo, cfg.amp_hi);
    const double frequency = rng.uniform(cfg.freq_lo, cfg.freq_hi);
    const double phase = rng.uniform(cfg.phase_lo, cfg.phase_hi);
    std::vector<double> truth(test_points);
    for (std::size_t i = 0; i < test_points; ++i)
      truth[i] = eval_sine(amplitude, frequency, phase, grid[i]);

    double mse_sum = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      std::vector<double> tx(cfg.shots), ty(cfg.shots);
      for (std::size_t i = 0; i < cfg.shots; ++i) {
        tx[i] = rng.uniform(cfg.x_lo, cfg.x_hi);
        ty[i] = eval_sine(amplitude, frequency, phase, tx[i]);
      }
      const Tensor pred = adapt(Tensor::matrix(cfg.shots, 1, std::move(tx)),
                                Tensor::matrix(cfg.shots, 1, std::move(ty)), grid);
      if (pred.numel() != test_points)
        throw ShapeError("evaluate_regression: adapter returned " + dims_to_string(pred.dims()) +
                         " for a " + std::to_string(test_points) + "-point grid");
      double se = 0.0;
      for (std::size_t i = 0; i < test_points; ++i)
        se += (pred[i] - truth[i]) * (pred[i] - truth[i]);
      mse_sum += se / static_cast<double>(test_points);
    }
    per_curve[c] = mse_sum / static_cast<double>(repeats);
  }
  return mean_ci95(per_curve);
}

EvalStats evaluate_classification(const ClusterTaskConfig& cfg, const ClassificationAdapter& adapt,
                                  Rng& rng, std::size_t n_tasks) {
  if (n_tasks == 0) throw ShapeError("evaluate_classification: n_tasks must be positive");
  std::vector<double> per_task(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const FewShotTask task = sample_cluster_task(cfg, rng);
    const Tensor logits = adapt(task.train_x, task.train_y, task.test_x);
    if (logits.rank() != 2 || logits.rows() != task.test_x.rows() || logits.cols() != cfg.ways)
      throw ShapeError("evaluate_classification: adapter returned " +
                       dims_to_string(logits.dims()));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t argmax = 0;
      for (std::size_t j = 1; j < cfg.ways; ++j)
        if (logits.at(i, j) > logits.at(i, argmax)) argmax = j;
      if (task.test_y.at(i, argmax) == 1.0) ++correct;
    }
    per_task[t] = static_cast<double>(correct) / static_cast<double>(logits.rows());
  }
  return mean_ci95(per_task);
}

}  // namespace metasgd
