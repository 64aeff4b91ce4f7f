#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace sierra::ml {

/// k x k counts; entry (i, j) is the number of rows of true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {}

  std::size_t classes() const noexcept { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const noexcept { return counts_[truth * k_ + predicted]; }
  void add(std::size_t truth, std::size_t predicted) noexcept { ++counts_[truth * k_ + predicted]; }

  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  std::uint64_t row_sum(std::size_t i) const noexcept;
  std::uint64_t col_sum(std::size_t j) const noexcept;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Throws LabelOutOfRange for any label outside [0, k), ShapeMismatch for
/// differing lengths.
ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t k);

struct Metrics {
  double accuracy = 0.0;
  std::vector<std::optional<double>> precision;  // nullopt: class never predicted
  std::vector<std::optional<double>> recall;     // nullopt: class never present
};

/// Throws EmptyMatrix when the matrix holds no observations.
Metrics metrics(const ConfusionMatrix& cm);

nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const Metrics& m);

}  // namespace sierra::ml
