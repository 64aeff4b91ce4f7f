#pragma once

// Fully connected networks trained with minibatch SGD + momentum.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sierra/ml/matrix.hpp"

namespace sierra::ml {

enum class Activation { Identity, Relu, Tanh };
enum class Task { Classification, Regression };
enum class LossKind { CrossEntropy, Mse };

struct Layer {
  Matrix weights;             // out x in
  std::vector<double> bias;   // out

  bool operator==(const Layer&) const = default;
};

struct MlpModel {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  std::vector<Layer> layers;
  Activation hidden = Activation::Relu;
  Task task = Task::Classification;  // softmax output when classifying, identity otherwise
  std::uint64_t seed = 0;

  std::size_t input_size() const noexcept { return layer_sizes.front(); }
  std::size_t output_size() const noexcept { return layer_sizes.back(); }
  std::size_t parameter_count() const noexcept;

  bool operator==(const MlpModel&) const = default;
};

/// Labelled rows. Classification rows carry `labels` in [0, num_classes);
/// regression rows carry `targets` (n x outputs).
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  Matrix targets;
  Task task = Task::Classification;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return features.rows(); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// One-hot labels (width `width`) or the regression targets.
Matrix target_matrix(const Dataset& data, std::size_t width);

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
MlpModel init_mlp(std::span<const std::size_t> layer_sizes, Activation hidden, Task task, std::uint64_t seed);

struct ForwardCache {
  std::vector<Matrix> pre;          // z_1..z_L
  std::vector<Matrix> activations;  // a_0 = x, a_1..a_L
};

Matrix forward(const MlpModel& model, const Matrix& x);
std::vector<double> forward(const MlpModel& model, std::span<const double> x);
ForwardCache forward_cached(const MlpModel& model, const Matrix& x);

/// Cross-entropy: -(1/n) sum T log max(P, 1e-12). MSE: mean over every entry.
double loss(const Matrix& pred, const Matrix& target, LossKind kind);

LossKind default_loss(Task task) noexcept;

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

/// Gradient of the mean batch loss with respect to every parameter.
Gradients grad(const MlpModel& model, const Dataset& batch, LossKind kind);

/// Max over parameters of |a - n| / max(1e-8, |a| + |n|), where n is the
/// central difference (L(p + h) - L(p - h)) / 2h.
double grad_check(const MlpModel& model, const Dataset& batch, LossKind kind, double h = 1e-6);

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> history;  // full-dataset loss after each epoch
};

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg);

/// Arg-max per row; ties resolve to the lowest class index.
std::vector<int> predict_classes(const MlpModel& model, const Matrix& features);
Matrix predict_values(const MlpModel& model, const Matrix& features);
int argmax(std::span<const double> row) noexcept;

/// Seeded generator for initialization and shuffling. The standard
/// distributions are implementation-defined, so draws are derived from the
/// raw engine output to stay reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() noexcept;  // [0, 1)
  std::size_t below(std::size_t n) noexcept;

 private:
  std::mt19937_64 engine_;
};

}  // namespace sierra::ml
