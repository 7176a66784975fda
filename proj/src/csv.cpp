#include "metasgd/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

namespace metasgd {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw IoError("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += header[i];
  }
  out.push_back('\n');
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw IoError("write_csv: row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out.push_back(',');
      out += row[i];
    }
    out.push_back('\n');
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_csv: cannot open '" + tmp + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_csv: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("write_csv: cannot rename '" + tmp + "' to '" + path + "'");
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(log.size());
  for (const TrainRow& r : log)
    rows.push_back(
        {std::to_string(r.iteration), format_double(r.value), format_double(r.wall_ms)});
  write_csv(path, {"iteration", "mean_test_loss_or_return", "wall_ms"}, rows);
}

void write_eval_summary(const std::string& path, const std::vector<EvalRow>& rows) {
  std::vector<std::vector<std::string>> out;
  out.reserve(rows.size());
  for (const EvalRow& r : rows)
    out.push_back({r.setting, format_double(r.mean), format_double(r.ci95_half)});
  write_csv(path, {"setting", "mean", "ci95_half"}, out);
}

}  // namespace metasgd
