#include <numeric>

#include "sierra/core/error.hpp"
#include "sierra/ml/mlp.hpp"

namespace sierra::ml {

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) throw Error(ErrorCode::PreconditionViolation, "learning_rate must be >= 0");
  if (cfg.epochs < 1) throw Error(ErrorCode::PreconditionViolation, "epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error(ErrorCode::PreconditionViolation, "batch_size must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw Error(ErrorCode::PreconditionViolation, "momentum must lie in [0, 1)");
  }
  if (data.size() == 0) throw Error(ErrorCode::PreconditionViolation, "training set is empty");
  if (data.task != model.task) throw Error(ErrorCode::ShapeMismatch, "dataset task differs from model task");

  const LossKind kind = default_loss(model.task);
  const Matrix full_target = target_matrix(data, model.output_size());

  std::vector<Matrix> vw;
  std::vector<std::vector<double>> vb;
  for (const auto& l : model.layers) {
    vw.emplace_back(l.weights.rows(), l.weights.cols());
    vb.emplace_back(l.bias.size(), 0.0);
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Dataset batch = data.subset(std::span<const std::size_t>(order).subspan(start, end - start));
      const Gradients g = grad(model, batch, kind);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto w = model.layers[l].weights.data();
        auto v = vw[l].data();
        const auto gw = g.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] - cfg.learning_rate * gw[i];
          w[i] += v[i];
        }
        auto& b = model.layers[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i) {
          vb[l][i] = cfg.momentum * vb[l][i] - cfg.learning_rate * g.biases[l][i];
          b[i] += vb[l][i];
        }
      }
    }
    result.history.push_back(loss(forward(model, data.features), full_target, kind));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace sierra::ml
