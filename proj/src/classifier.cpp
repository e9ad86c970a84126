#include "mcl/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace mcl {
namespace {

void check_batch(const ClassifierParams& params, const Batch& batch, std::string_view op) {
  if (batch.size() == 0) {
    throw ArgumentError(std::string(op) + ": empty batch");
  }
  if (batch.inputs.rows() != static_cast<Index>(batch.labels.size())) {
    throw ShapeError(std::string(op) + ": " + std::to_string(batch.inputs.rows()) +
                     " input rows vs " + std::to_string(batch.labels.size()) + " labels");
  }
  if (batch.inputs.cols() != params.input_dim()) {
    throw ShapeError(std::string(op) + ": input width " + std::to_string(batch.inputs.cols()) +
                     " vs first layer in-dim " + std::to_string(params.input_dim()));
  }
  const int C = static_cast<int>(params.num_classes());
  for (int y : batch.labels) {
    if (y < 0 || y >= C) {
      throw ArgumentError(std::string(op) + ": label " + std::to_string(y) +
                          " outside [0, " + std::to_string(C) + ")");
    }
  }
}

// Hidden activations (ReLU) for every layer plus the final logits.
struct Trace {
  std::vector<Matrix> acts;  // acts[0] = inputs, acts[k] = ReLU output of layer k-1
  Matrix logits;
};

Trace run_forward(const ClassifierParams& params, const Matrix& inputs) {
  Trace t;
  t.acts.push_back(inputs);
  const Index L = params.stack.num_layers();
  for (Index k = 0; k < L; ++k) {
    Matrix z = matmul(t.acts.back(), params.stack.weights[static_cast<std::size_t>(k)]);
    z.rowwise() += params.stack.biases[static_cast<std::size_t>(k)].transpose();
    if (k + 1 < L) {
      t.acts.push_back(z.cwiseMax(0.0));
    } else {
      t.logits = std::move(z);
    }
  }
  return t;
}

Matrix softmax_rows(const Matrix& logits) {
  const Index n = logits.rows(), C = logits.cols();
  Matrix probs(n, C);
  for (Index i = 0; i < n; ++i) {
    double m = logits(i, 0);
    for (Index c = 1; c < C; ++c) m = std::max(m, logits(i, c));
    double denom = 0.0;
    for (Index c = 0; c < C; ++c) {
      const double e = std::exp(logits(i, c) - m);
      probs(i, c) = e;
      denom += e;
    }
    for (Index c = 0; c < C; ++c) probs(i, c) /= denom;
  }
  return probs;
}

}  // namespace

ClassifierParams ClassifierParams::init(const std::vector<Index>& dims, Rng rng) {
  ClassifierParams p;
  p.stack = make_mlp_stack(dims, rng);
  return p;
}

Matrix forward(const ClassifierParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim()) {
    throw ShapeError("forward: input width " + std::to_string(inputs.cols()) +
                     " vs first layer in-dim " + std::to_string(params.input_dim()));
  }
  Trace t = run_forward(params, inputs);
  Matrix probs = softmax_rows(t.logits);
  ensure_all_finite(probs, "forward");
  return probs;
}

LossGrad loss_and_grad(const ClassifierParams& params, const Batch& batch) {
  check_batch(params, batch, "loss_and_grad");
  const Index n = batch.size();
  const Index C = params.num_classes();
  const Index L = params.stack.num_layers();

  Trace t = run_forward(params, batch.inputs);

  // Per-sample cross-entropy via log-sum-exp; reduced pairwise over samples.
  std::vector<double> sample_loss(static_cast<std::size_t>(n));
  Matrix delta = softmax_rows(t.logits);
  for (Index i = 0; i < n; ++i) {
    double m = t.logits(i, 0);
    for (Index c = 1; c < C; ++c) m = std::max(m, t.logits(i, c));
    double denom = 0.0;
    for (Index c = 0; c < C; ++c) denom += std::exp(t.logits(i, c) - m);
    const int y = batch.labels[static_cast<std::size_t>(i)];
    sample_loss[static_cast<std::size_t>(i)] = m + std::log(denom) - t.logits(i, y);
    delta(i, y) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  LossGrad out;
  out.loss = sum_pairwise(sample_loss) * inv_n;

  LayerStack grads;
  grads.weights.resize(static_cast<std::size_t>(L));
  grads.biases.resize(static_cast<std::size_t>(L));
  grads.layout = params.stack.layout;
  for (Index k = L - 1; k >= 0; --k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    grads.weights[ks] = matmul_at_pairwise(t.acts[ks], delta);
    grads.biases[ks] = colsum_pairwise(delta);
    if (k > 0) {
      Matrix prev = matmul_bt(delta, params.stack.weights[ks]);
      // ReLU mask: derivative 0 at exactly 0.
      const Matrix& act = t.acts[ks];
      for (Index i = 0; i < prev.rows(); ++i) {
        for (Index j = 0; j < prev.cols(); ++j) {
          if (act(i, j) <= 0.0) prev(i, j) = 0.0;
        }
      }
      delta = std::move(prev);
    }
  }

  out.grad = flatten(grads) * inv_n;
  ensure_all_finite(out.grad, "loss_and_grad");
  if (!std::isfinite(out.loss)) {
    throw DivergenceError("loss_and_grad: non-finite loss");
  }
  return out;
}

double accuracy(const ClassifierParams& params, const Batch& batch) {
  check_batch(params, batch, "accuracy");
  const Index n = batch.size();
  Trace t = run_forward(params, batch.inputs);
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index c = 1; c < t.logits.cols(); ++c) {
      if (t.logits(i, c) > t.logits(i, best)) best = c;
    }
    if (best == batch.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

// Shared chunking for the averaged gradient statistics: indices are
// shuffled into minibatches, then each minibatch is sorted ascending so a
// single chunk reproduces the full-batch gradient bit-exactly.
template <typename Accumulate>
void for_each_minibatch(const Batch& data, Index minibatch, Rng& rng, Accumulate&& fn) {
  const Index n = data.size();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  shuffle_indices(idx, rng);
  for (Index start = 0; start < n; start += minibatch) {
    const Index stop = std::min(n, start + minibatch);
    std::vector<Index> chunk(idx.begin() + start, idx.begin() + stop);
    std::sort(chunk.begin(), chunk.end());
    Batch b;
    b.inputs.resize(stop - start, data.inputs.cols());
    b.labels.resize(static_cast<std::size_t>(stop - start));
    for (Index r = 0; r < stop - start; ++r) {
      b.inputs.row(r) = data.inputs.row(chunk[static_cast<std::size_t>(r)]);
      b.labels[static_cast<std::size_t>(r)] =
          data.labels[static_cast<std::size_t>(chunk[static_cast<std::size_t>(r)])];
    }
    fn(b);
  }
}

}  // namespace

GradStats avg_squared_gradient(const ClassifierParams& params, const Batch& task_data,
                               Index minibatch, Rng rng) {
  if (task_data.size() == 0) throw ArgumentError("avg_squared_gradient: empty task data");
  if (minibatch < 1) throw ArgumentError("avg_squared_gradient: minibatch must be >= 1");
  FlatVector acc = FlatVector::Zero(params.param_count());
  Index chunks = 0;
  for_each_minibatch(task_data, minibatch, rng, [&](const Batch& b) {
    const LossGrad lg = loss_and_grad(params, b);
    acc.array() += lg.grad.array().square();
    ++chunks;
  });
  GradStats stats;
  stats.avg_sq_grad = acc / static_cast<double>(chunks);
  return stats;
}

FlatVector avg_gradient(const ClassifierParams& params, const Batch& task_data, Index minibatch,
                        Rng rng) {
  if (task_data.size() == 0) throw ArgumentError("avg_gradient: empty task data");
  if (minibatch < 1) throw ArgumentError("avg_gradient: minibatch must be >= 1");
  FlatVector acc = FlatVector::Zero(params.param_count());
  Index chunks = 0;
  for_each_minibatch(task_data, minibatch, rng, [&](const Batch& b) {
    acc += loss_and_grad(params, b).grad;
    ++chunks;
  });
  return acc / static_cast<double>(chunks);
}

}  // namespace mcl
