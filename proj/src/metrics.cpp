#include "s2a/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "s2a/error.h"

namespace s2a {

namespace {

std::vector<double> histogram(const FeatureSeq& s) {
  const int bins = s.vocab_size - kNumSpecials;
  if (bins <= 0) throw DataError("kld: vocabulary has no value tokens");
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  for (int v : s.values) {
    if (v < kNumSpecials || v >= s.vocab_size) throw DataError("kld: value " + std::to_string(v) + " outside the value-token range");
    h[static_cast<std::size_t>(v - kNumSpecials)] += 1.0;
  }
  for (double& x : h) x /= static_cast<double>(s.values.size());
  return h;
}

void check_pair(const FeatureSeq& a, const FeatureSeq& b) {
  if (a.feature != b.feature || a.vocab_size != b.vocab_size) throw DataError("metric inputs differ in feature or vocabulary");
}

std::vector<double> as_double(const FeatureSeq& s) { return {s.values.begin(), s.values.end()}; }

}  // namespace

double kl_divergence(std::vector<double> q, std::vector<double> p, double epsilon) {
  if (q.size() != p.size() || q.empty()) throw DataError("kl_divergence: histograms differ in size");
  auto smooth = [epsilon](std::vector<double>& h) {
    double total = 0.0;
    for (double& x : h) total += (x += epsilon);
    for (double& x : h) x /= total;
  };
  smooth(q);
  smooth(p);
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) d += q[i] * std::log(q[i] / p[i]);
  }
  return std::max(d, 0.0);
}

double kld(const FeatureSeq& pred, const FeatureSeq& target, KldDirection direction) {
  check_pair(pred, target);
  if (pred.values.empty() || target.values.empty()) throw DataError("kld: empty sequence");
  const auto p = histogram(pred);
  const auto q = histogram(target);
  return direction == KldDirection::kTargetFromPrediction ? kl_divergence(q, p, kKldSmoothing)
                                                          : kl_divergence(p, q, kKldSmoothing);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("pearson: need two equal-length sequences of length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("undefined correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(const FeatureSeq& pred, const FeatureSeq& target) {
  check_pair(pred, target);
  return pearson(as_double(pred), as_double(target));
}

std::optional<double> try_pearson(const FeatureSeq& pred, const FeatureSeq& target) {
  try {
    return pearson(pred, target);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

double dtwd(const FeatureSeq& pred, const FeatureSeq& target) {
  check_pair(pred, target);
  const std::size_t n = pred.values.size(), m = target.values.size();
  if (n == 0 || m == 0) throw DataError("dtwd: empty sequence");
  if (pred.vocab_size <= 0) throw DataError("dtwd: vocabulary size must be positive");

  // (cost, length) compared lexicographically; costs are exact integers.
  struct Cell {
    long long cost;
    long long length;
  };
  constexpr long long kInf = std::numeric_limits<long long>::max() / 4;
  std::vector<Cell> prev(m + 1, {kInf, 0}), cur(m + 1, {kInf, 0});
  prev[0] = {0, 0};
  auto less = [](const Cell& a, const Cell& b) { return a.cost != b.cost ? a.cost < b.cost : a.length < b.length; };
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {kInf, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      Cell best = prev[j - 1];
      if (less(prev[j], best)) best = prev[j];
      if (less(cur[j - 1], best)) best = cur[j - 1];
      const long long c = std::llabs(static_cast<long long>(pred.values[i - 1]) - target.values[j - 1]);
      cur[j] = {best.cost + c, best.length + 1};
    }
    std::swap(prev, cur);
  }
  const Cell end = prev[m];
  return static_cast<double>(end.cost) / static_cast<double>(end.length) / pred.vocab_size;
}

namespace {

double matrix_mse(const RealMatrix& a, const RealMatrix& b, double rate_a, double rate_b) {
  if (rate_a != rate_b) throw DataError("mse: frame rates differ");
  if (a.cols() != b.cols()) throw DataError("mse: bin counts differ");
  const Eigen::Index rows = std::min(a.rows(), b.rows());
  if (rows == 0) throw DataError("mse: no overlapping frames");
  return (a.topRows(rows) - b.topRows(rows)).array().square().mean();
}

}  // namespace

double chroma_mse(const Chromagram& a, const Chromagram& b) {
  return matrix_mse(a.frames, b.frames, a.frame_rate, b.frame_rate);
}

double spectrogram_mse(const Spectrogram& a, const Spectrogram& b) {
  return matrix_mse(a.frames, b.frames, a.frame_rate, b.frame_rate);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate agg;
  agg.n = values.size();
  if (values.empty()) return agg;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return agg;
  double ss = 0.0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  agg.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  return agg;
}

namespace {

void finalize_granularity(Granularity& g) {
  for (int h = 0; h < kNumHeads; ++h) {
    std::vector<double> kl, corr, dt;
    std::size_t missing = 0;
    for (const auto& row : g.rows) {
      kl.push_back(row.kld[h]);
      dt.push_back(row.dtwd[h]);
      if (row.correlation[h]) {
        corr.push_back(*row.correlation[h]);
      } else {
        ++missing;
      }
    }
    g.features[h].kld = aggregate(kl);
    g.features[h].correlation = aggregate(corr);
    g.features[h].correlation.missing = missing;
    g.features[h].dtwd = aggregate(dt);
  }
}

WindowMetrics score_window(const std::string& name, const std::array<FeatureSeq, kNumHeads>& pred,
                           const std::array<FeatureSeq, kNumHeads>& target) {
  WindowMetrics w;
  w.name = name;
  for (int h = 0; h < kNumHeads; ++h) {
    w.kld[h] = kld(pred[h], target[h]);
    w.correlation[h] = try_pearson(pred[h], target[h]);
    w.dtwd[h] = dtwd(pred[h], target[h]);
  }
  return w;
}

std::array<FeatureSeq, kNumHeads> empty_features(const VocabSpec& vocab) {
  std::array<FeatureSeq, kNumHeads> out;
  for (int h = 0; h < kNumHeads; ++h) {
    out[h].feature = kHeadFeatures[h];
    out[h].vocab_size = vocab.size(kHeadFeatures[h]);
  }
  return out;
}

}  // namespace

void MetricReport::finalize() {
  finalize_granularity(performance);
  finalize_granularity(segment);
  chroma_agg = aggregate(chroma_mse);
  spectrogram_agg = aggregate(spectrogram_mse);
}

MetricReport evaluate_m2m(const std::vector<EvaluationItem>& items, int window) {
  if (window <= 0) throw DataError("evaluate: window must be positive");
  const VocabSpec vocab;
  MetricReport report;
  for (const auto& item : items) {
    const auto pred_toks = tokenize(resample_grid(item.predicted, kBeatResolution), false);
    const auto target_toks = tokenize(resample_grid(item.target, kBeatResolution), false);
    auto pred = empty_features(vocab);
    auto target = empty_features(vocab);
    for (const auto& [i, j] : item.alignment.pairs) {
      if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= pred_toks.size() ||
          static_cast<std::size_t>(j) >= target_toks.size()) {
        throw DataError("evaluate: alignment index out of range in " + item.name);
      }
      for (int h = 0; h < kNumHeads; ++h) {
        pred[h].values.push_back(pred_toks[static_cast<std::size_t>(i)][kHeadFeatures[h]]);
        target[h].values.push_back(target_toks[static_cast<std::size_t>(j)][kHeadFeatures[h]]);
      }
    }
    report.item_names.push_back(item.name);
    const std::size_t matched = pred[0].values.size();
    if (matched == 0) continue;
    report.performance.rows.push_back(score_window(item.name, pred, target));

    for (std::size_t start = 0; start < matched; start += static_cast<std::size_t>(window)) {
      const std::size_t end = std::min(matched, start + static_cast<std::size_t>(window));
      auto pw = empty_features(vocab);
      auto tw = empty_features(vocab);
      for (int h = 0; h < kNumHeads; ++h) {
        pw[h].values.assign(pred[h].values.begin() + static_cast<std::ptrdiff_t>(start),
                            pred[h].values.begin() + static_cast<std::ptrdiff_t>(end));
        tw[h].values.assign(target[h].values.begin() + static_cast<std::ptrdiff_t>(start),
                            target[h].values.begin() + static_cast<std::ptrdiff_t>(end));
      }
      report.segment.rows.push_back(score_window(item.name + "#" + std::to_string(start / static_cast<std::size_t>(window)), pw, tw));
    }
  }
  report.finalize();
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json agg_json(const Aggregate& a) {
  nlohmann::json j{{"mean", a.mean}, {"n", a.n}};
  j["ci95"] = a.ci95 ? nlohmann::json(*a.ci95) : nlohmann::json(nullptr);
  if (a.missing > 0) j["missing"] = a.missing;
  return j;
}

nlohmann::json granularity_json(const Granularity& g) {
  nlohmann::json j{{"windows", g.rows.size()}};
  for (int h = 0; h < kNumHeads; ++h) {
    const auto& f = g.features[h];
    j[feature_name(kHeadFeatures[h])] = {
        {"kld", agg_json(f.kld)}, {"correlation", agg_json(f.correlation)}, {"dtwd", agg_json(f.dtwd)}};
  }
  return j;
}

std::string format_agg(const Aggregate& a) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  if (a.n == 0) return "n/a";
  os << a.mean;
  if (a.ci95) {
    os << " +- " << *a.ci95;
  }
  return os.str();
}

}  // namespace

std::string report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["items"] = r.item_names;
  j["performance_wise"] = granularity_json(r.performance);
  j["segment_wise"] = granularity_json(r.segment);
  j["chroma_mse"] = agg_json(r.chroma_agg);
  j["spectrogram_mse"] = agg_json(r.spectrogram_agg);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const MetricReport& r) {
  // One row per item with its performance-wise metrics; blanks mark values
  // that are undefined (no matched notes, constant sequences, no audio).
  std::ostringstream os;
  os << std::setprecision(10);
  os << "item";
  for (int h = 0; h < kNumHeads; ++h) {
    const std::string f = feature_name(kHeadFeatures[h]);
    os << ',' << f << "_kld," << f << "_correlation," << f << "_dtwd";
  }
  os << ",chroma_mse,spectrogram_mse\n";
  std::size_t next = 0;
  for (std::size_t i = 0; i < r.item_names.size(); ++i) {
    os << r.item_names[i];
    const WindowMetrics* row = nullptr;
    if (next < r.performance.rows.size() && r.performance.rows[next].name == r.item_names[i]) {
      row = &r.performance.rows[next++];
    }
    for (int h = 0; h < kNumHeads; ++h) {
      os << ',';
      if (row) os << row->kld[h];
      os << ',';
      if (row && row->correlation[h]) os << *row->correlation[h];
      os << ',';
      if (row) os << row->dtwd[h];
    }
    os << ',';
    if (i < r.chroma_mse.size()) os << r.chroma_mse[i];
    os << ',';
    if (i < r.spectrogram_mse.size()) os << r.spectrogram_mse[i];
    os << '\n';
  }
  return os.str();
}

std::string report_summary(const MetricReport& r) {
  std::ostringstream os;
  os << std::left;
  os << std::setw(22) << "Feature" << " | " << std::setw(16) << "KLD" << std::setw(16) << "Correlation"
     << std::setw(16) << "DTWD" << " | " << std::setw(16) << "KLD" << std::setw(16) << "Correlation"
     << std::setw(16) << "DTWD" << '\n';
  os << std::setw(22) << "" << " | " << std::setw(48) << "performance-wise" << " | " << "segment-wise\n";
  const char* names[kNumHeads] = {"Velocity", "Inter-Onset Interval", "Duration"};
  for (int h = 0; h < kNumHeads; ++h) {
    const auto& p = r.performance.features[h];
    const auto& s = r.segment.features[h];
    os << std::setw(22) << names[h] << " | " << std::setw(16) << format_agg(p.kld) << std::setw(16)
       << format_agg(p.correlation) << std::setw(16) << format_agg(p.dtwd) << " | " << std::setw(16)
       << format_agg(s.kld) << std::setw(16) << format_agg(s.correlation) << std::setw(16) << format_agg(s.dtwd)
       << '\n';
  }
  os << "Chroma MSE:      " << format_agg(r.chroma_agg) << '\n';
  os << "Spectrogram MSE: " << format_agg(r.spectrogram_agg) << '\n';
  return os.str();
}

}  // namespace s2a
