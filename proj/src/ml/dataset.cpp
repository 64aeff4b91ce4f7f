#include "sierra/ml/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "sierra/core/error.hpp"

namespace sierra::ml {
namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

[[noreturn]] void bad(int line, const std::string& msg) {
  throw Error(ErrorCode::BadDataset, "line " + std::to_string(line) + ": " + msg);
}

double parse_number(std::string_view cell, int line, std::size_t col) {
  const std::string s(cell);
  char* end = nullptr;
  const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    bad(line, "column " + std::to_string(col + 1) + " is not a finite number: '" + s + "'");
  }
  return v;
}

}  // namespace

Dataset parse_dataset_csv(std::string_view text, Task task) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<double> targets;
  std::size_t width = 0;
  int lineno = 0;
  bool header = true;

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const auto cells = split_csv_line(line);
    if (header) {
      if (cells.size() < 2) bad(lineno, "need at least one feature column and a label column");
      width = cells.size();
      header = false;
      continue;
    }
    if (cells.size() != width) {
      bad(lineno, "expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()));
    }
    std::vector<double> feat;
    feat.reserve(width - 1);
    for (std::size_t c = 0; c + 1 < width; ++c) feat.push_back(parse_number(cells[c], lineno, c));
    rows.push_back(std::move(feat));

    const std::string_view last = cells.back();
    if (task == Task::Classification) {
      int y = 0;
      auto [ptr, ec] = std::from_chars(last.data(), last.data() + last.size(), y);
      if (ec != std::errc() || ptr != last.data() + last.size() || y < 0) {
        bad(lineno, "label must be a non-negative integer: '" + std::string(last) + "'");
      }
      labels.push_back(y);
    } else {
      targets.push_back(parse_number(last, lineno, width - 1));
    }
  }
  if (header) throw Error(ErrorCode::BadDataset, "dataset has no header row");
  if (rows.empty()) throw Error(ErrorCode::BadDataset, "dataset has no rows");

  Dataset d;
  d.task = task;
  d.features = Matrix(rows.size(), width - 1);
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), d.features.row(r).begin());
  if (task == Task::Classification) {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    if (k < 2) throw Error(ErrorCode::BadDataset, "classification needs at least 2 classes");
    d.labels = std::move(labels);
    d.num_classes = static_cast<std::size_t>(k);
  } else {
    d.targets = Matrix(targets.size(), 1);
    std::copy(targets.begin(), targets.end(), d.targets.data().begin());
  }
  return d;
}

}  // namespace sierra::ml
