#include "s2a/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "s2a/error.h"
#include "s2a/metrics.h"

namespace s2a {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || warmup_steps < 0 || max_epochs < 0 || max_steps < 0 || batch_size <= 0 ||
      alpha < 0.0 || !(gradnorm_lr > 0.0)) {
    throw DataError("train config: values must be positive");
  }
}

template <typename T>
TaskLosses cross_entropy_sum(const OutputDistributions<T>& dist, const TokenSegment& target,
                             std::array<Mat<T>, kNumHeads>* dlogits, T grad_scale) {
  TaskLosses loss{0.0, 0.0, 0.0};
  const auto len = static_cast<Eigen::Index>(target.tuples.size());
  for (int h = 0; h < kNumHeads; ++h) {
    const Mat<T>& logits = dist.logits[h];
    if (logits.rows() != len) throw DataError("loss: logits and target lengths differ");
    if (dlogits != nullptr) (*dlogits)[h] = Mat<T>::Zero(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < len; ++r) {
      if (target.pad_mask[static_cast<std::size_t>(r)]) continue;
      const int tok = target.tuples[static_cast<std::size_t>(r)][kHeadFeatures[h]];
      if (tok < 0 || tok >= logits.cols()) throw DataError("loss: target token outside the vocabulary");
      const auto row = logits.row(r);
      const double mx = static_cast<double>(row.maxCoeff());
      double z = 0.0;
      for (Eigen::Index k = 0; k < row.size(); ++k) z += std::exp(static_cast<double>(row(k)) - mx);
      const double log_z = mx + std::log(z);
      loss[h] += log_z - static_cast<double>(row(tok));
      if (dlogits != nullptr) {
        auto d = (*dlogits)[h].row(r);
        for (Eigen::Index k = 0; k < row.size(); ++k) {
          d(k) = static_cast<T>(std::exp(static_cast<double>(row(k)) - log_z)) * grad_scale;
        }
        d(tok) -= grad_scale;
      }
    }
  }
  return loss;
}

template <typename T>
TaskLosses feature_loss(const OutputDistributions<T>& dist, const TokenSegment& target) {
  const int n = target.valid_length();
  if (n == 0) throw DataError("loss: target has no non-pad positions");
  TaskLosses loss = cross_entropy_sum<T>(dist, target, nullptr, T(0));
  for (double& l : loss) l /= n;
  return loss;
}

template TaskLosses cross_entropy_sum<float>(const OutputDistributions<float>&, const TokenSegment&,
                                             std::array<Mat<float>, kNumHeads>*, float);
template TaskLosses cross_entropy_sum<double>(const OutputDistributions<double>&, const TokenSegment&,
                                              std::array<Mat<double>, kNumHeads>*, double);
template TaskLosses feature_loss<float>(const OutputDistributions<float>&, const TokenSegment&);
template TaskLosses feature_loss<double>(const OutputDistributions<double>&, const TokenSegment&);

TaskWeights gradnorm_step(const TaskWeights& weights, const TaskLosses& losses, const TaskLosses& grad_norms,
                          double learning_rate) {
  for (double l0 : weights.initial_losses) {
    if (l0 == 0.0) throw DataError("gradnorm: initial loss is zero, training rates are undefined");
  }
  std::array<double, kNumHeads> ratio{};
  for (int k = 0; k < kNumHeads; ++k) ratio[k] = losses[k] / weights.initial_losses[k];
  const double mean_ratio = (ratio[0] + ratio[1] + ratio[2]) / kNumHeads;
  const double mean_g = (grad_norms[0] + grad_norms[1] + grad_norms[2]) / kNumHeads;

  TaskWeights next = weights;
  for (int k = 0; k < kNumHeads; ++k) {
    const double target = mean_g * std::pow(ratio[k] / mean_ratio, weights.alpha);
    const double diff = grad_norms[k] - target;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    // G_k = w_k * ||grad L_k||, so dG_k/dw_k = G_k / w_k
    const double grad = sign * grad_norms[k] / weights.w[k];
    next.w[k] = std::max(weights.w[k] - learning_rate * grad, kMinTaskWeight);
  }
  const double scale = kNumHeads / next.sum();
  for (double& w : next.w) w *= scale;
  return next;
}

namespace {

struct AdamState {
  M2MParams<float> m, v;
  long t = 0;
};

void adam_update(M2MParams<float>& params, const M2MParams<float>& grad, AdamState& st, double lr,
                 const TrainConfig& cfg) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.t));
  const auto b1 = static_cast<float>(cfg.adam_beta1);
  const auto b2 = static_cast<float>(cfg.adam_beta2);
  const auto step = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(cfg.adam_eps);

  std::vector<Mat<float>*> p, g, m, v;
  params.visit([&](const std::string&, Mat<float>& x) { p.push_back(&x); });
  const_cast<M2MParams<float>&>(grad).visit([&](const std::string&, Mat<float>& x) { g.push_back(&x); });
  st.m.visit([&](const std::string&, Mat<float>& x) { m.push_back(&x); });
  st.v.visit([&](const std::string&, Mat<float>& x) { v.push_back(&x); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = b1 * m[i]->array() + (1.0f - b1) * g[i]->array();
    v[i]->array() = b2 * v[i]->array() + (1.0f - b2) * g[i]->array().square();
    p[i]->array() -= step * m[i]->array() / ((v[i]->array() * inv_bc2).sqrt() + eps);
  }
}

}  // namespace

TrainLog train(M2MModel& model, const std::vector<TrainingPair>& dataset, const TrainConfig& cfg,
               const StopHook& stop) {
  cfg.validate();
  TrainLog log;
  log.final_weights.alpha = cfg.alpha;
  if (cfg.max_epochs == 0) return log;
  if (dataset.empty()) throw DataError("train: dataset is empty");

  Rng shuffle_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  AdamState adam{model.params().zeros_like(), model.params().zeros_like(), 0};
  std::array<M2MParams<float>, kNumHeads> task_grads{model.params().zeros_like(), model.params().zeros_like(),
                                                     model.params().zeros_like()};
  M2MParams<float> total_grad = model.params().zeros_like();
  TaskWeights weights;
  weights.alpha = cfg.alpha;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        log.final_weights = weights;
        return log;
      }
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      long positions = 0;
      for (std::size_t b = b0; b < b1; ++b) positions += dataset[order[b]].target.valid_length();
      if (positions == 0) continue;

      for (auto& g : task_grads) g.set_zero();
      TaskLosses losses{0.0, 0.0, 0.0};
      const float scale = 1.0f / static_cast<float>(positions);
      for (std::size_t b = b0; b < b1; ++b) {
        const auto& pair = dataset[order[b]];
        ForwardCache<float> cache;
        const auto dist = model.forward(pair.score, cache, &dropout_rng);
        std::array<Mat<float>, kNumHeads> dlogits;
        const auto sums = cross_entropy_sum<float>(dist, pair.target, &dlogits, scale);
        for (int k = 0; k < kNumHeads; ++k) {
          losses[k] += sums[k] / static_cast<double>(positions);
          std::array<const Mat<float>*, kNumHeads> only{nullptr, nullptr, nullptr};
          only[k] = &dlogits[k];
          model.backward(cache, only, task_grads[k]);
        }
      }

      if (!weights.initialized) {
        weights.initial_losses = losses;
        weights.initialized = true;
      }
      double total = 0.0;
      for (int k = 0; k < kNumHeads; ++k) total += weights.w[k] * losses[k];
      if (!std::isfinite(total)) throw TrainingError("non-finite loss at step " + std::to_string(step), step);

      // Gradient of the weighted total is linear in the per-task gradients.
      std::vector<Mat<float>*> tg;
      total_grad.visit([&](const std::string&, Mat<float>& x) { tg.push_back(&x); });
      std::array<std::vector<Mat<float>*>, kNumHeads> per_task;
      for (int k = 0; k < kNumHeads; ++k) {
        task_grads[k].visit([&](const std::string&, Mat<float>& x) { per_task[k].push_back(&x); });
      }
      for (std::size_t i = 0; i < tg.size(); ++i) {
        *tg[i] = static_cast<float>(weights.w[0]) * *per_task[0][i] + static_cast<float>(weights.w[1]) * *per_task[1][i] +
                 static_cast<float>(weights.w[2]) * *per_task[2][i];
      }

      const double lr = cfg.warmup_steps > 0
                            ? cfg.learning_rate * std::min(1.0, static_cast<double>(step + 1) / cfg.warmup_steps)
                            : cfg.learning_rate;
      adam_update(model.params(), total_grad, adam, lr, cfg);
      if (!model.params().all_finite()) {
        throw TrainingError("non-finite weights after step " + std::to_string(step), step);
      }

      TaskLosses norms{};
      for (int k = 0; k < kNumHeads; ++k) {
        norms[k] = weights.w[k] * task_grads[k].w_in.cast<double>().norm();
      }
      TrainLogRow row{step, lr, weights.w, losses, total};
      log.rows.push_back(row);
      weights = gradnorm_step(weights, losses, norms, cfg.gradnorm_lr);
      ++step;
      if (stop && stop(row, model)) {
        log.final_weights = weights;
        return log;
      }
    }
  }
  log.final_weights = weights;
  return log;
}

std::string train_log_csv(const TrainLog& log) {
  std::ostringstream os;
  os.precision(9);
  os << "step,lr,w_vel,w_ioi,w_dur,L_vel,L_ioi,L_dur,total\n";
  for (const auto& r : log.rows) {
    os << r.step << ',' << r.lr << ',' << r.w[0] << ',' << r.w[1] << ',' << r.w[2] << ',' << r.losses[0] << ','
       << r.losses[1] << ',' << r.losses[2] << ',' << r.total << '\n';
  }
  return os.str();
}

FitReport evaluate_fit(const M2MModel& model, const std::vector<TrainingPair>& dataset) {
  FitReport report;
  std::array<std::vector<double>, kNumHeads> pred, truth;
  for (const auto& pair : dataset) {
    const auto dist = model.forward(pair.score);
    for (std::size_t r = 0; r < pair.target.tuples.size(); ++r) {
      if (pair.target.pad_mask[r]) continue;
      ++report.positions;
      for (int h = 0; h < kNumHeads; ++h) {
        const auto row = dist.logits[h].row(static_cast<Eigen::Index>(r));
        Eigen::Index best = kNumSpecials;
        for (Eigen::Index k = kNumSpecials + 1; k < row.size(); ++k) {
          if (row(k) > row(best)) best = k;
        }
        const int target = pair.target.tuples[r][kHeadFeatures[h]];
        pred[h].push_back(static_cast<double>(best));
        truth[h].push_back(target);
        if (best == target) report.accuracy[h] += 1.0;
      }
    }
  }
  for (int h = 0; h < kNumHeads; ++h) {
    if (report.positions > 0) report.accuracy[h] /= static_cast<double>(report.positions);
    try {
      report.correlation[h] = pearson(pred[h], truth[h]);
    } catch (const DataError&) {
      report.correlation[h] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return report;
}

}  // namespace s2a
