#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "s2a/align.h"
#include "s2a/m2m_model.h"
#include "s2a/synth.h"

namespace s2a {

struct FeatureSeq {
  std::vector<int> values;  // token ids
  Feature feature = Feature::kVelocity;
  int vocab_size = 0;
};

inline constexpr double kKldSmoothing = 1e-6;

enum class KldDirection { kTargetFromPrediction, kPredictionFromTarget };

/// KL(target || pred) by default, over histograms of the value tokens with
/// kKldSmoothing added to every bin before renormalizing.
double kld(const FeatureSeq& pred, const FeatureSeq& target,
           KldDirection direction = KldDirection::kTargetFromPrediction);

/// sum_i q_i ln(q_i / p_i) of two histograms after epsilon smoothing.
double kl_divergence(std::vector<double> q, std::vector<double> p, double epsilon);

/// Sample correlation. Throws DataError("undefined correlation") when either
/// sequence is constant.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
double pearson(const FeatureSeq& pred, const FeatureSeq& target);
std::optional<double> try_pearson(const FeatureSeq& pred, const FeatureSeq& target);

/// Optimal DTW cost under |a - b| with steps (1,0), (0,1), (1,1), divided by
/// the warping path length and the vocabulary size. Among minimum-cost
/// paths the shortest one is used.
double dtwd(const FeatureSeq& pred, const FeatureSeq& target);

double chroma_mse(const Chromagram& a, const Chromagram& b);
double spectrogram_mse(const Spectrogram& a, const Spectrogram& b);

struct Aggregate {
  double mean = 0.0;
  std::optional<double> ci95;  // half-width, absent for n < 2
  std::size_t n = 0;
  std::size_t missing = 0;
};

/// Mean with a normal-approximation 95% half-width (1.96 standard errors).
Aggregate aggregate(const std::vector<double>& values);

/// Metrics of one evaluated window (a whole performance or a 256-note slice).
struct WindowMetrics {
  std::string name;
  std::array<double, kNumHeads> kld{};
  std::array<std::optional<double>, kNumHeads> correlation;  // empty when undefined
  std::array<double, kNumHeads> dtwd{};
};

struct FeatureAggregates {
  Aggregate kld, correlation, dtwd;
};

struct Granularity {
  std::vector<WindowMetrics> rows;
  std::array<FeatureAggregates, kNumHeads> features;
};

struct MetricReport {
  Granularity performance;
  Granularity segment;
  std::vector<std::string> item_names;
  // Per item, parallel to item_names when audio metrics were computed.
  std::vector<double> chroma_mse, spectrogram_mse;
  Aggregate chroma_agg, spectrogram_agg;

  void finalize();  // recompute all aggregates
};

struct EvaluationItem {
  NoteSequence predicted;
  NoteSequence target;
  AlignmentMap alignment;  // predicted index -> target index
  std::string name;
};

/// Matched-note velocity/IOI/duration token sequences, evaluated over whole
/// performances and over consecutive 256-note windows.
MetricReport evaluate_m2m(const std::vector<EvaluationItem>& items, int window = kSegmentLength);

std::string report_to_json(const MetricReport& report);
std::string report_to_csv(const MetricReport& report);
std::string report_summary(const MetricReport& report);

}  // namespace s2a
