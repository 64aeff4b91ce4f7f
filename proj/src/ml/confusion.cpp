#include "sierra/ml/confusion.hpp"

#include <numeric>

#include "sierra/core/error.hpp"

namespace sierra::ml {

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const noexcept {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += at(i, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const noexcept {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, j);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t k) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::ShapeMismatch, "label sequences differ in length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      throw Error(ErrorCode::LabelOutOfRange, "label outside [0, " + std::to_string(k) + ") at row " + std::to_string(i));
    }
    cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix holds no observations");
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto col = cm.col_sum(c), row = cm.row_sum(c);
    m.precision.push_back(col ? std::optional(static_cast<double>(cm.at(c, c)) / static_cast<double>(col)) : std::nullopt);
    m.recall.push_back(row ? std::optional(static_cast<double>(cm.at(c, c)) / static_cast<double>(row)) : std::nullopt);
  }
  return m;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < cm.classes(); ++j) row.push_back(cm.at(i, j));
    rows.push_back(std::move(row));
  }
  return {{"k", cm.classes()}, {"counts", std::move(rows)}, {"total", cm.total()}};
}

nlohmann::json to_json(const Metrics& m) {
  auto opt = [](const std::vector<std::optional<double>>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& x : v) out.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
    return out;
  };
  return {{"accuracy", m.accuracy}, {"precision", opt(m.precision)}, {"recall", opt(m.recall)}};
}

}  // namespace sierra::ml
