#include "mcl/predictor.hpp"

#include <algorithm>
#include <cmath>

namespace mcl {
namespace {

// Keeps the first tanh layer out of saturation when fed log-scaled
// gradient columns, whose magnitudes reach O(10).
constexpr double kHiddenInitScale = 0.1;

double signed_log(double x, double eps) {
  const double mag = std::log1p(std::abs(x) / eps);
  return x < 0.0 ? -mag : mag;
}

struct Trace {
  std::vector<Matrix> acts;  // acts[0] = features, acts[k] = tanh output of layer k-1
  Matrix output;             // [P x 1]
};

Trace run_forward(const PredictorParams& phi, const Matrix& features) {
  Trace t;
  t.acts.push_back(features);
  const Index L = phi.stack.num_layers();
  for (Index k = 0; k < L; ++k) {
    Matrix z = matmul(t.acts.back(), phi.stack.weights[static_cast<std::size_t>(k)]);
    z.rowwise() += phi.stack.biases[static_cast<std::size_t>(k)].transpose();
    if (k + 1 < L) {
      t.acts.push_back(z.array().tanh().matrix());
    } else {
      t.output = std::move(z);
    }
  }
  return t;
}

}  // namespace

PredictorParams PredictorParams::init(Index features, const std::vector<Index>& hidden, Rng rng) {
  std::vector<Index> dims;
  dims.push_back(features);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  PredictorParams p;
  p.stack = make_mlp_stack(dims, rng, /*zero_final_layer=*/true, kHiddenInitScale);
  return p;
}

PerParamFeatures assemble_features(const FlatVector& g_cur, const FlatVector& prev_stat,
                                   const FlatVector& theta_star, const FlatVector& theta,
                                   const FeatureOptions& opts) {
  const Index P = g_cur.size();
  if (prev_stat.size() != P || theta_star.size() != P || theta.size() != P) {
    throw ShapeError("assemble_features: lengths " + std::to_string(P) + ", " +
                     std::to_string(prev_stat.size()) + ", " + std::to_string(theta_star.size()) +
                     ", " + std::to_string(theta.size()) + " differ");
  }
  PerParamFeatures f;
  f.features.resize(P, 5);
  for (Index i = 0; i < P; ++i) {
    double g = g_cur[i];
    double s = prev_stat[i];
    if (opts.log_scale_gradients) {
      g = signed_log(g, opts.log_epsilon);
      s = signed_log(s, opts.log_epsilon);
    }
    f.features(i, 0) = g;
    f.features(i, 1) = s;
    f.features(i, 2) = theta_star[i];
    f.features(i, 3) = theta[i];
    f.features(i, 4) = theta[i] - theta_star[i];
  }
  ensure_all_finite(f.features, "assemble_features");
  return f;
}

PerParamFeatures assemble_features(const FlatVector& g_cur, const GradStats& prev_stats,
                                   const FlatVector& theta_star, const FlatVector& theta,
                                   const FeatureOptions& opts) {
  return assemble_features(g_cur, prev_stats.avg_sq_grad, theta_star, theta, opts);
}

StepVector predict_steps(const PredictorParams& phi, const PerParamFeatures& feats) {
  if (feats.feature_count() != phi.feature_count()) {
    throw ShapeError("predict_steps: " + std::to_string(feats.feature_count()) +
                     " feature columns vs predictor input dim " +
                     std::to_string(phi.feature_count()));
  }
  Trace t = run_forward(phi, feats.features);
  StepVector out;
  out.steps = t.output.col(0);
  ensure_all_finite(out.steps, "predict_steps");
  return out;
}

FlatVector apply_update(const FlatVector& theta, const StepVector& steps, double eta) {
  if (theta.size() != steps.steps.size()) {
    throw ShapeError("apply_update: theta length " + std::to_string(theta.size()) +
                     " vs steps length " + std::to_string(steps.steps.size()));
  }
  if (!std::isfinite(eta)) throw ArgumentError("apply_update: eta must be finite");
  return theta - eta * steps.steps;
}

FlatVector meta_gradient(const PredictorParams& phi, const PerParamFeatures& feats,
                         const FlatVector& dloss_dtheta_prime, double eta) {
  if (feats.feature_count() != phi.feature_count()) {
    throw ShapeError("meta_gradient: " + std::to_string(feats.feature_count()) +
                     " feature columns vs predictor input dim " +
                     std::to_string(phi.feature_count()));
  }
  if (feats.param_count() != dloss_dtheta_prime.size()) {
    throw ShapeError("meta_gradient: " + std::to_string(feats.param_count()) +
                     " feature rows vs upstream gradient length " +
                     std::to_string(dloss_dtheta_prime.size()));
  }
  const Index L = phi.stack.num_layers();
  Trace t = run_forward(phi, feats.features);

  // d theta'_i / d steps_i = -eta, so the scalar output of row i receives
  // -eta * dL/dtheta'_i.
  Matrix delta = (-eta) * dloss_dtheta_prime;

  LayerStack grads;
  grads.weights.resize(static_cast<std::size_t>(L));
  grads.biases.resize(static_cast<std::size_t>(L));
  grads.layout = phi.stack.layout;
  for (Index k = L - 1; k >= 0; --k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    grads.weights[ks] = matmul_at_pairwise(t.acts[ks], delta);
    grads.biases[ks] = colsum_pairwise(delta);
    if (k > 0) {
      Matrix prev = matmul_bt(delta, phi.stack.weights[ks]);
      const Matrix& act = t.acts[ks];
      prev.array() *= (1.0 - act.array().square());
      delta = std::move(prev);
    }
  }
  FlatVector out = flatten(grads);
  ensure_all_finite(out, "meta_gradient");
  return out;
}

std::vector<std::int64_t> step_histogram(const StepVector& steps, double eta,
                                         const std::vector<double>& bin_edges) {
  if (bin_edges.size() < 2) throw ArgumentError("step_histogram: need at least 2 bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i - 1] < bin_edges[i])) {
      throw ArgumentError("step_histogram: bin edges must be strictly increasing");
    }
  }
  std::vector<std::int64_t> counts(bin_edges.size() + 1, 0);
  for (Index i = 0; i < steps.steps.size(); ++i) {
    const double v = eta * steps.steps[i];
    if (v < bin_edges.front()) {
      ++counts.front();
    } else if (v >= bin_edges.back()) {
      ++counts.back();
    } else {
      const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), v);
      ++counts[static_cast<std::size_t>(it - bin_edges.begin())];
    }
  }
  return counts;
}

std::vector<double> default_step_bin_edges() {
  constexpr int kBins = 101;
  std::vector<double> edges(kBins + 1);
  for (int i = 0; i <= kBins; ++i) {
    edges[static_cast<std::size_t>(i)] = -0.5 + static_cast<double>(i) / kBins;
  }
  return edges;
}

}  // namespace mcl
