#pragma once

#include <string_view>

#include "sierra/ml/mlp.hpp"

namespace sierra::ml {

/// CSV with a header row; every column but the last is a numeric feature,
/// the last is an integer class label (classification) or a numeric target
/// (regression). Throws BadDataset naming the offending line.
Dataset parse_dataset_csv(std::string_view text, Task task);

}  // namespace sierra::ml
