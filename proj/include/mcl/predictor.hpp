#pragma once

#include "mcl/classifier.hpp"
#include "mcl/ndcore.hpp"

#include <array>
#include <cstdint>

namespace mcl {

// The update step prediction model h_phi: a small MLP applied independently
// to each classifier parameter's feature row. Hidden layers use tanh, the
// scalar output is linear (signed step). The output layer starts at zero so
// the initial optimizer is a no-op.
struct PredictorParams {
  LayerStack stack;

  Index param_count() const { return stack.param_count(); }
  Index feature_count() const { return stack.weights.front().rows(); }

  static PredictorParams init(Index features, const std::vector<Index>& hidden, Rng rng);
};

struct FeatureOptions {
  // sign(x) * log(1 + |x| / epsilon) applied to the gradient-valued columns.
  bool log_scale_gradients = true;
  double log_epsilon = 1e-8;
};

// P x F predictor inputs, one row per classifier parameter.
struct PerParamFeatures {
  Matrix features;

  static constexpr std::array<std::string_view, 5> kColumnNames = {
      "grad_current", "avg_sq_grad_prev", "theta_star", "theta", "theta_delta"};

  Index param_count() const { return features.rows(); }
  Index feature_count() const { return features.cols(); }
};

// Columns in fixed order: [g_cur, avg_sq_grad_prev, theta_star, theta,
// theta - theta_star]. The two gradient columns pass through the log
// transform unless opts disables it.
PerParamFeatures assemble_features(const FlatVector& g_cur, const FlatVector& prev_stat,
                                   const FlatVector& theta_star, const FlatVector& theta,
                                   const FeatureOptions& opts = {});
PerParamFeatures assemble_features(const FlatVector& g_cur, const GradStats& prev_stats,
                                   const FlatVector& theta_star, const FlatVector& theta,
                                   const FeatureOptions& opts = {});

struct StepVector {
  FlatVector steps;  // length P
};

// Each feature row mapped independently through the MLP.
StepVector predict_steps(const PredictorParams& phi, const PerParamFeatures& feats);

// theta' = theta - eta * steps.
FlatVector apply_update(const FlatVector& theta, const StepVector& steps, double eta);

// Exact gradient of L(f_theta') w.r.t. phi where theta' = theta - eta *
// h_phi(feats): reverse mode over the element-wise MLP with the P feature
// rows acting as a batch. feats and theta are constants (only the last
// update step is differentiated).
FlatVector meta_gradient(const PredictorParams& phi, const PerParamFeatures& feats,
                         const FlatVector& dloss_dtheta_prime, double eta);

// Histogram of eta * steps over the given strictly increasing edges, with
// two extra bins for values below the first / at or above the last edge.
// Layout: [underflow, bin_0 .. bin_{m-2}, overflow]; counts sum to P.
std::vector<std::int64_t> step_histogram(const StepVector& steps, double eta,
                                         const std::vector<double>& bin_edges);

// 101 uniform bins over [-0.5, 0.5]; the diagnostic edges used for the
// per-meta-epoch step histograms.
std::vector<double> default_step_bin_edges();

}  // namespace mcl
