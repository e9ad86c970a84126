#pragma once

#include "mcl/ndcore.hpp"

namespace mcl {

// The mapping function f_theta: fully connected net, ReLU hidden layers,
// softmax output. dims = [input, hidden..., classes].
struct ClassifierParams {
  LayerStack stack;

  Index param_count() const { return stack.param_count(); }
  Index input_dim() const { return stack.weights.front().rows(); }
  Index num_classes() const { return stack.weights.back().cols(); }

  static ClassifierParams init(const std::vector<Index>& dims, Rng rng);
};

struct Batch {
  Matrix inputs;            // [n x d]
  std::vector<int> labels;  // length n, each in [0, C)

  Index size() const { return inputs.rows(); }
};

// Per-parameter importance signal for the previous task: mean over
// minibatches of the elementwise squared loss gradient at theta*.
struct GradStats {
  FlatVector avg_sq_grad;  // length P, entries >= 0
};

// Row-wise softmax probabilities, [n x C]; each row sums to 1.
Matrix forward(const ClassifierParams& params, const Matrix& inputs);

struct LossGrad {
  double loss = 0.0;
  FlatVector grad;
};

// Mean cross-entropy over the batch and its exact reverse-mode gradient,
// flattened via the parameter layout. Per-sample contributions are reduced
// with a fixed pairwise tree over the batch index.
LossGrad loss_and_grad(const ClassifierParams& params, const Batch& batch);

// Fraction of argmax-correct rows; argmax ties break toward the lowest
// class index.
double accuracy(const ClassifierParams& params, const Batch& batch);

// Mean over minibatches of the elementwise square of the minibatch loss
// gradient. Minibatch membership is drawn from rng; each minibatch keeps
// ascending sample order, so minibatch >= |data| reduces to the square of
// the full-batch gradient exactly.
GradStats avg_squared_gradient(const ClassifierParams& params, const Batch& task_data,
                               Index minibatch, Rng rng);

// Raw-gradient variant of the same statistic (config flag; entries signed).
FlatVector avg_gradient(const ClassifierParams& params, const Batch& task_data, Index minibatch,
                        Rng rng);

}  // namespace mcl
