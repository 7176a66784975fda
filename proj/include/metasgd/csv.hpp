#pragma once

#include <string>
#include <vector>

#include "metasgd/train.hpp"

namespace metasgd {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Header plus rows, '\n' line endings, written to a temp file and renamed.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Columns: iteration, mean_test_loss_or_return, wall_ms.
void write_train_log(const std::string& path, const TrainLog& log);

struct EvalRow {
  std::string setting;
  double mean;
  double ci95_half;
};

/// Columns: setting, mean, ci95_half.
void write_eval_summary(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace metasgd
