#pragma once

#include "mcl/classifier.hpp"
#include "mcl/predictor.hpp"
#include "mcl/tasks.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mcl {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  FlatVector m;
  FlatVector v;
  std::int64_t t = 0;
  AdamConfig config;

  static AdamState init(Index param_count, const AdamConfig& config = {});
};

struct AdamResult {
  FlatVector theta;
  AdamState state;
};

// theta - lr * grad.
FlatVector sgd_step(const FlatVector& theta, const FlatVector& grad, double lr);

// Standard Adam with bias correction; returns the new parameters and state.
AdamResult adam_step(const FlatVector& theta, const FlatVector& grad, AdamState state);

// theta - lr * (grad + lambda * fisher .* (theta - theta_star)).
FlatVector ewc_baseline_step(const FlatVector& theta, const FlatVector& grad_current,
                             const GradStats& fisher, const FlatVector& theta_star, double lr,
                             double lambda);

enum class PrevStatKind { SquaredGradient, RawGradient };
enum class UnionBatchPolicy { BalancedMinibatch, FullEpoch };

struct MetaTrainConfig {
  int meta_epochs = 30;
  int inner_epochs = 1;
  int classifier_epochs = 1;
  Index minibatch = 64;
  Index stats_minibatch = 64;
  double eta = 0.1;
  AdamConfig classifier_adam{};
  AdamConfig meta_adam{};  // meta_adam.alpha is the meta learning rate
  UnionBatchPolicy union_batch = UnionBatchPolicy::BalancedMinibatch;
  PrevStatKind prev_stat = PrevStatKind::SquaredGradient;
  FeatureOptions features{};
  std::uint64_t seed = 0;
  bool record_histograms = true;
  bool evaluate_each_epoch = true;
  bool record_wall_time = false;
};

struct ContinualConfig {
  int epochs_first_task = 20;
  int epochs_per_task = 20;
  Index minibatch = 64;
  Index stats_minibatch = 64;
  double eta = 0.1;
  AdamConfig adam{};
  PrevStatKind prev_stat = PrevStatKind::SquaredGradient;
  FeatureOptions features{};
  std::uint64_t seed = 0;
  bool evaluate_each_epoch = true;
  bool record_wall_time = false;
};

struct BaselineConfig {
  enum class Kind { Sgd, Ewc };
  Kind kind = Kind::Sgd;
  double lr = 0.01;
  double lambda = 100.0;
  int epochs_first_task = 20;
  int epochs_per_task = 20;
  Index minibatch = 64;
  Index stats_minibatch = 64;
  AdamConfig adam{};  // first task is trained with Adam, like Algorithm 2
  std::uint64_t seed = 0;
  bool evaluate_each_epoch = true;
  bool record_wall_time = false;
};

struct MetricsRow {
  std::string run_id;
  std::uint64_t seed = 0;
  int task_index = 0;
  int epoch = 0;
  double loss = 0.0;
  std::vector<double> task_accuracy;
  double avg_accuracy = 0.0;
  double wall_ms = 0.0;
};

struct HistogramRow {
  std::string run_id;
  std::uint64_t seed = 0;
  int pair_index = 0;
  int meta_epoch = 0;
  std::vector<std::int64_t> counts;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  std::vector<HistogramRow> histograms;
  std::vector<double> final_task_accuracy;
  double final_avg_accuracy = 0.0;
};

struct MetaTrainResult {
  PredictorParams predictor;
  RunMetrics metrics;
};

struct ContinualResult {
  ClassifierParams params;
  RunMetrics metrics;
};

struct ClassifierSpec {
  std::vector<Index> dims;  // [input, hidden..., classes]
};

// One Adam epoch of minibatch training; returns the mean minibatch loss.
double adam_train_epoch(ClassifierParams& params, const Batch& train, Index minibatch,
                        AdamState& state, Rng epoch_rng);

// Algorithm 1: meta continual learning of phi over consecutive subtask
// pairs. Each meta-epoch extends theta* by classifier_epochs Adam epochs on
// the previous subtask, recomputes the previous-task statistics, then runs
// inner_epochs passes over the current subtask; every inner minibatch takes
// one predicted update step and one meta step on the union loss gradient.
MetaTrainResult meta_train(const ClassifierSpec& classifier_spec,
                           const PredictorParams& predictor_init, const TaskSequence& meta_tasks,
                           const MetaTrainConfig& cfg);

// Algorithm 2: task 1 trained with Adam, later tasks trained with the
// frozen predictor phi*.
ContinualResult continual_learn(const ClassifierParams& theta_init,
                                const PredictorParams& phi_star, const TaskSequence& targets,
                                const ContinualConfig& cfg);

// Sequential fine-tuning baseline: first task Adam (identical to Algorithm
// 2 given the same seed and theta_init), later tasks plain SGD or the
// EWC-style penalized step.
ContinualResult run_baseline(const ClassifierParams& theta_init, const TaskSequence& targets,
                             const BaselineConfig& cfg);

enum class Split { Train, Valid, Test };

struct SequenceEvaluation {
  std::vector<double> task_accuracy;
  double average = 0.0;
};

// Accuracy on each task's test split plus the unweighted mean.
SequenceEvaluation evaluate_sequence(const ClassifierParams& params, const TaskSequence& targets);
SequenceEvaluation evaluate_sequence_split(const ClassifierParams& params,
                                           const TaskSequence& targets, Split split);

// Candidate with the highest validation accuracy; ties break to the lowest
// index.
std::size_t select_best_predictor_index(const std::vector<double>& validation_accuracy);
const PredictorParams& select_best_predictor(
    const std::vector<std::pair<PredictorParams, double>>& candidates);

}  // namespace mcl
