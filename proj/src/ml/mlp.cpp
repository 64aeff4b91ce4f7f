#include "sierra/ml/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "sierra/core/error.hpp"

namespace sierra::ml {
namespace {

constexpr double kLogClamp = 1e-12;

double activate(Activation a, double z) noexcept {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
  }
  return z;
}

// Derivative expressed through the pre-activation z and activation value a.
double activate_grad(Activation act, double z, double a) noexcept {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - a * a;
  }
  return 1.0;
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

// z = a W^T + b
Matrix affine(const Matrix& a, const Layer& layer) {
  const std::size_t n = a.rows(), in = a.cols(), out = layer.weights.rows();
  Matrix z(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = a.row(i);
    for (std::size_t j = 0; j < out; ++j) {
      const auto w = layer.weights.row(j);
      double s = layer.bias[j];
      for (std::size_t k = 0; k < in; ++k) s += x[k] * w[k];
      z(i, j) = s;
    }
  }
  return z;
}

void check_input(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(x.cols()) + " != model input " +
                                              std::to_string(model.input_size()));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "input contains a non-finite value");
  }
}

template <class F>
void for_each_parameter(MlpModel& model, F&& f) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t i = 0; i < model.layers[l].weights.size(); ++i) f(l, false, i, model.layers[l].weights.data()[i]);
    for (std::size_t i = 0; i < model.layers[l].bias.size(); ++i) f(l, true, i, model.layers[l].bias[i]);
  }
}

}  // namespace

double Rng::uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) noexcept {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::size_t MlpModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.features = features.gather_rows(rows);
  if (task == Task::Classification) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
  } else {
    out.targets = targets.gather_rows(rows);
  }
  return out;
}

Matrix target_matrix(const Dataset& data, std::size_t width) {
  if (data.task == Task::Regression) {
    if (data.targets.rows() != data.size() || data.targets.cols() != width) {
      throw Error(ErrorCode::ShapeMismatch, "regression targets do not match the model output");
    }
    return data.targets;
  }
  if (data.labels.size() != data.size()) throw Error(ErrorCode::ShapeMismatch, "label count != row count");
  Matrix t(data.size(), width);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const int y = data.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= width) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " + std::to_string(width) + ")");
    }
    t(i, static_cast<std::size_t>(y)) = 1.0;
  }
  return t;
}

MlpModel init_mlp(std::span<const std::size_t> layer_sizes, Activation hidden, Task task, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw Error(ErrorCode::BadArchitecture, "a network needs at least an input and an output layer");
  if (std::any_of(layer_sizes.begin(), layer_sizes.end(), [](std::size_t s) { return s == 0; })) {
    throw Error(ErrorCode::BadArchitecture, "layer sizes must be >= 1");
  }
  if (task == Task::Classification && layer_sizes.back() < 2) {
    throw Error(ErrorCode::BadArchitecture, "classification needs at least 2 output classes");
  }
  MlpModel m;
  m.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  m.hidden = hidden;
  m.task = task;
  m.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t in = layer_sizes[l], out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weights.data()) w = (2.0 * rng.uniform() - 1.0) * limit;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

ForwardCache forward_cached(const MlpModel& model, const Matrix& x) {
  check_input(model, x);
  ForwardCache cache;
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix z = affine(cache.activations.back(), model.layers[l]);
    Matrix a = z;
    const bool output = l + 1 == model.layers.size();
    if (!output) {
      for (double& v : a.data()) v = activate(model.hidden, v);
    } else if (model.task == Task::Classification) {
      softmax_rows(a);
    }
    cache.pre.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
  }
  return cache;
}

Matrix forward(const MlpModel& model, const Matrix& x) { return std::move(forward_cached(model, x).activations.back()); }

std::vector<double> forward(const MlpModel& model, std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  const Matrix out = forward(model, m);
  return {out.data().begin(), out.data().end()};
}

double loss(const Matrix& pred, const Matrix& target, LossKind kind) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction and target shapes differ");
  }
  if (pred.rows() == 0) throw Error(ErrorCode::PreconditionViolation, "loss over an empty batch");
  double s = 0.0;
  const auto p = pred.data();
  const auto t = target.data();
  if (kind == LossKind::CrossEntropy) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (t[i] != 0.0) s -= t[i] * std::log(std::max(p[i], kLogClamp));
    }
    return s / static_cast<double>(pred.rows());
  }
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return s / static_cast<double>(p.size());
}

LossKind default_loss(Task task) noexcept {
  return task == Task::Classification ? LossKind::CrossEntropy : LossKind::Mse;
}

Gradients grad(const MlpModel& model, const Dataset& batch, LossKind kind) {
  if (batch.size() == 0) throw Error(ErrorCode::PreconditionViolation, "gradient of an empty batch");
  const ForwardCache cache = forward_cached(model, batch.features);
  const Matrix target = target_matrix(batch, model.output_size());
  const Matrix& out = cache.activations.back();
  const std::size_t n = out.rows(), k = out.cols();

  // dL/dA at the output.
  Matrix delta(n, k);
  if (kind == LossKind::CrossEntropy) {
    for (std::size_t i = 0; i < n * k; ++i) {
      const double p = out.data()[i], t = target.data()[i];
      delta.data()[i] = (t != 0.0 && p > kLogClamp) ? -t / (p * static_cast<double>(n)) : 0.0;
    }
  } else {
    const double scale = 2.0 / static_cast<double>(n * k);
    for (std::size_t i = 0; i < n * k; ++i) delta.data()[i] = scale * (out.data()[i] - target.data()[i]);
  }
  // Through the output nonlinearity: softmax Jacobian-vector product.
  if (model.task == Task::Classification) {
    for (std::size_t r = 0; r < n; ++r) {
      const auto p = out.row(r);
      auto d = delta.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += d[j] * p[j];
      for (std::size_t j = 0; j < k; ++j) d[j] = p[j] * (d[j] - dot);
    }
  }

  Gradients g;
  g.weights.resize(model.layers.size());
  g.biases.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer& layer = model.layers[l];
    const Matrix& a_prev = cache.activations[l];
    const std::size_t out_n = layer.weights.rows(), in_n = layer.weights.cols();

    Matrix dw(out_n, in_n);
    std::vector<double> db(out_n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = delta.row(r);
      const auto a = a_prev.row(r);
      for (std::size_t j = 0; j < out_n; ++j) {
        db[j] += d[j];
        auto w = dw.row(j);
        for (std::size_t c = 0; c < in_n; ++c) w[c] += d[j] * a[c];
      }
    }
    g.weights[l] = std::move(dw);
    g.biases[l] = std::move(db);

    if (l == 0) break;
    Matrix prev(n, in_n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = delta.row(r);
      auto p = prev.row(r);
      for (std::size_t j = 0; j < out_n; ++j) {
        const auto w = layer.weights.row(j);
        for (std::size_t c = 0; c < in_n; ++c) p[c] += d[j] * w[c];
      }
    }
    const Matrix& z = cache.pre[l - 1];
    const Matrix& a = cache.activations[l];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      prev.data()[i] *= activate_grad(model.hidden, z.data()[i], a.data()[i]);
    }
    delta = std::move(prev);
  }
  return g;
}

double grad_check(const MlpModel& model, const Dataset& batch, LossKind kind, double h) {
  if (batch.size() == 0) throw Error(ErrorCode::PreconditionViolation, "gradient check on an empty batch");
  const Gradients analytic = grad(model, batch, kind);
  const Matrix target = target_matrix(batch, model.output_size());
  MlpModel probe = model;
  double worst = 0.0;
  for_each_parameter(probe, [&](std::size_t l, bool is_bias, std::size_t i, double& p) {
    const double saved = p;
    p = saved + h;
    const double up = loss(forward(probe, batch.features), target, kind);
    p = saved - h;
    const double down = loss(forward(probe, batch.features), target, kind);
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = is_bias ? analytic.biases[l][i] : analytic.weights[l].data()[i];
    const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, rel);
  });
  return worst;
}

int argmax(std::span<const double> row) noexcept {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<int>(best);
}

std::vector<int> predict_classes(const MlpModel& model, const Matrix& features) {
  const Matrix out = forward(model, features);
  std::vector<int> labels(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) labels[r] = argmax(out.row(r));
  return labels;
}

Matrix predict_values(const MlpModel& model, const Matrix& features) { return forward(model, features); }

}  // namespace sierra::ml
