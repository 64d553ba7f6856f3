#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "s2a/m2m_model.h"

namespace s2a {

using TaskLosses = std::array<double, kNumHeads>;

/// Loss weights balanced by GradNorm. Invariant: weights positive, sum 3.
struct TaskWeights {
  std::array<double, kNumHeads> w{1.0, 1.0, 1.0};
  TaskLosses initial_losses{0.0, 0.0, 0.0};
  bool initialized = false;
  double alpha = 1.5;

  double sum() const { return w[0] + w[1] + w[2]; }
};

inline constexpr double kMinTaskWeight = 1e-4;

struct TrainConfig {
  double learning_rate = 2e-5;
  int warmup_steps = 40;
  int max_epochs = 1;
  long max_steps = 0;  // 0: no step cap
  int batch_size = 8;
  double alpha = 1.5;
  std::uint64_t seed = 0;
  double gradnorm_lr = 0.025;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// One aligned training example: score tokens in, performance tokens out.
/// Positions where the target is padded are excluded from the loss.
struct TrainingPair {
  TokenSegment score;
  TokenSegment target;
};

/// Mean cross-entropy per head over non-pad target positions. Throws
/// DataError when the target has no such position.
template <typename T>
TaskLosses feature_loss(const OutputDistributions<T>& dist, const TokenSegment& target);

/// Summed cross-entropy per head. When `dlogits` is non-null it receives
/// grad_scale * d(sum)/d(logits); pad rows are zero.
template <typename T>
TaskLosses cross_entropy_sum(const OutputDistributions<T>& dist, const TokenSegment& target,
                             std::array<Mat<T>, kNumHeads>* dlogits, T grad_scale);

/// One GradNorm update of the task weights.
///
/// `weighted_grad_norms[k]` is ||d(w_k L_k)/dW|| for the shared layer W. The
/// targets mean(G) * r_k^alpha are held constant; each weight takes one
/// subgradient step on sum_k |G_k - target_k| and the result is rescaled to
/// sum to 3.
TaskWeights gradnorm_step(const TaskWeights& weights, const TaskLosses& losses,
                          const TaskLosses& weighted_grad_norms, double learning_rate);

struct TrainLogRow {
  long step = 0;
  double lr = 0.0;
  std::array<double, kNumHeads> w{};
  TaskLosses losses{};
  double total = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  TaskWeights final_weights;
};

/// Called after every optimizer step; returning true ends training.
using StopHook = std::function<bool(const TrainLogRow&, const M2MModel&)>;

/// Adam with linear warm-up, seeded epoch shuffling and GradNorm weighting.
/// Throws TrainingError naming the step when the loss becomes non-finite.
TrainLog train(M2MModel& model, const std::vector<TrainingPair>& dataset, const TrainConfig& cfg,
               const StopHook& stop = {});

std::string train_log_csv(const TrainLog& log);

/// Greedy (argmax) predictions on a dataset.
struct FitReport {
  std::array<double, kNumHeads> accuracy{};
  std::array<double, kNumHeads> correlation{};
  long positions = 0;
};
FitReport evaluate_fit(const M2MModel& model, const std::vector<TrainingPair>& dataset);

}  // namespace s2a
