#pragma once

// Random inputs and brute-force reference implementations shared by the
// unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "s2a/align.h"
#include "s2a/m2m_model.h"
#include "s2a/metrics.h"
#include "s2a/midi_io.h"
#include "s2a/tokenizer.h"
#include "s2a/trainer.h"

namespace s2a::testing {

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

/// Arbitrary MIDI content that survives a write/parse cycle: same-key notes
/// are FIFO-representable, meta events sit on distinct ticks.
inline NoteSequence random_midi_sequence(Rng& rng, int n_notes) {
  NoteSequence s;
  s.ppq = std::array{96, 192, 220, 480, 960}[rng.below(5)];
  s.time_signatures.clear();
  std::int64_t t = 0;
  for (int k = 0, n = uniform_int(rng, 1, 3); k < n; ++k) {
    s.time_signatures.push_back({t, uniform_int(rng, 1, 12), uniform_int(rng, 0, 4)});
    t += uniform_int(rng, 1, 4000);
  }
  t = 0;
  for (int k = 0, n = uniform_int(rng, 0, 3); k < n; ++k) {
    s.tempi.push_back({t, uniform_int(rng, 200000, 1500000)});
    t += uniform_int(rng, 1, 4000);
  }
  t = uniform_int(rng, 0, 50);
  for (int k = 0, n = uniform_int(rng, 0, 6); k < n; ++k) {
    s.sustain_events.push_back({t, uniform_int(rng, 0, 127)});
    t += uniform_int(rng, 1, 2000);
  }

  std::map<std::pair<int, int>, std::int64_t> last_offset;
  std::int64_t onset = 0;
  for (int i = 0; i < n_notes; ++i) {
    onset += rng.uniform() < 0.3 ? 0 : uniform_int(rng, 1, 600);
    NoteEvent n;
    n.onset_ticks = onset;
    n.duration_ticks = uniform_int(rng, 1, 2000);
    n.pitch = uniform_int(rng, 0, 127);
    n.velocity = uniform_int(rng, 1, 127);
    n.channel = uniform_int(rng, 0, 3);
    s.notes.push_back(n);
  }
  s.normalize();
  for (auto& n : s.notes) {
    auto& prev = last_offset[{n.channel, n.pitch}];
    if (n.offset_ticks() < prev) n.duration_ticks = prev - n.onset_ticks;
    prev = n.offset_ticks();
  }
  s.normalize();
  return s;
}

/// A sequence on the 96-tick grid whose tokens decode back to itself:
/// first onset 0, odd velocities (bin centers), values inside the tables.
inline NoteSequence random_grid_sequence(Rng& rng, int n_notes) {
  NoteSequence s;
  s.ppq = kBeatResolution;
  s.tempi = {TempoEvent{0, kDefaultTempo}};
  s.time_signatures.clear();
  std::int64_t t = 0;
  for (int k = 0, n = uniform_int(rng, 1, 3); k < n; ++k) {
    s.time_signatures.push_back({t, uniform_int(rng, 1, 8), uniform_int(rng, 1, 3)});
    t += uniform_int(rng, 1, 3000);
  }
  std::int64_t onset = 0;
  for (int i = 0; i < n_notes; ++i) {
    if (i > 0) onset += rng.uniform() < 0.25 ? 0 : uniform_int(rng, 1, 767);
    NoteEvent n;
    n.onset_ticks = onset;
    n.duration_ticks = uniform_int(rng, 1, 1152);
    n.pitch = uniform_int(rng, kLowestPianoKey, kHighestPianoKey);
    n.velocity = 2 * uniform_int(rng, 0, 63) + 1;
    s.notes.push_back(n);
  }
  s.normalize();
  return s;
}

// ---------------------------------------------------------------------------
// Alignment oracle: enumerate every monotone matching of equal pitches.

struct BruteAlignment {
  double score = -std::numeric_limits<double>::infinity();
  double cost = 0.0;
  std::vector<std::pair<int, int>> pairs;
  int optima = 0;  // number of distinct matchings attaining (score, cost)
};

inline BruteAlignment brute_force_align(const NoteSequence& a, const NoteSequence& b, double gap) {
  const int n = static_cast<int>(a.notes.size()), m = static_cast<int>(b.notes.size());
  BruteAlignment best;
  std::vector<std::pair<int, int>> cur;
  const auto beats = [](const NoteSequence& s, int i) { return static_cast<double>(s.notes[static_cast<std::size_t>(i)].onset_ticks) / s.ppq; };
  std::function<void(int, int, double)> rec = [&](int i, int j_min, double cost) {
    if (i == n) {
      const double k = static_cast<double>(cur.size());
      const double score = k - gap * (n + m - 2 * k);
      constexpr double tol = 1e-12;
      if (score > best.score + tol || (std::abs(score - best.score) <= tol && cost < best.cost - tol)) {
        best.score = score;
        best.cost = cost;
        best.pairs = cur;
        best.optima = 1;
      } else if (std::abs(score - best.score) <= tol && std::abs(cost - best.cost) <= tol) {
        ++best.optima;
      }
      return;
    }
    rec(i + 1, j_min, cost);
    for (int j = j_min; j < m; ++j) {
      if (a.notes[static_cast<std::size_t>(i)].pitch != b.notes[static_cast<std::size_t>(j)].pitch) continue;
      cur.emplace_back(i, j);
      rec(i + 1, j + 1, cost + std::abs(beats(a, i) - beats(b, j)));
      cur.pop_back();
    }
  };
  rec(0, 0, 0.0);
  return best;
}

// ---------------------------------------------------------------------------
// DTW oracle: every monotone warping path from (0,0) to (n-1,m-1).

struct BrutePath {
  double cost = std::numeric_limits<double>::infinity();
  int length = 0;
};

inline BrutePath brute_force_dtw(const std::vector<int>& x, const std::vector<int>& y) {
  BrutePath best;
  const int n = static_cast<int>(x.size()), m = static_cast<int>(y.size());
  std::function<void(int, int, double, int)> rec = [&](int i, int j, double cost, int len) {
    cost += std::abs(x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)]);
    ++len;
    if (i == n - 1 && j == m - 1) {
      if (cost < best.cost || (cost == best.cost && len < best.length)) best = {cost, len};
      return;
    }
    if (i + 1 < n) rec(i + 1, j, cost, len);
    if (j + 1 < m) rec(i, j + 1, cost, len);
    if (i + 1 < n && j + 1 < m) rec(i + 1, j + 1, cost, len);
  };
  rec(0, 0, 0.0, 0);
  return best;
}

/// Textbook two-pass sample correlation.
inline double two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
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
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline FeatureSeq feature_seq(std::vector<int> values, Feature f = Feature::kVelocity) {
  return FeatureSeq{std::move(values), f, VocabSpec().size(f)};
}

/// Score on the grid plus a performance whose onset groups are shifted by
/// up to `jitter` of the neighbouring IOI. Returns the true pairs.
struct JitteredPiece {
  NoteSequence score, perf;
  std::vector<std::pair<int, int>> truth;
};

/// `edit_rate` of the score notes are dropped from the performance and the
/// same share of unrelated notes is inserted.
inline JitteredPiece jittered_piece(Rng& rng, int n_notes, double jitter, double edit_rate = 0.0) {
  JitteredPiece piece;
  NoteSequence& score = piece.score;
  score.ppq = kBeatResolution;
  score.tempi = {TempoEvent{0, kDefaultTempo}};
  std::vector<std::int64_t> group_onsets;
  std::int64_t onset = 0;
  while (static_cast<int>(score.notes.size()) < n_notes) {
    group_onsets.push_back(onset);
    const int size = rng.uniform() < 0.3 ? uniform_int(rng, 2, 3) : 1;
    std::vector<int> pitches;
    while (static_cast<int>(pitches.size()) < size) {
      const int p = uniform_int(rng, 48, 72);
      if (std::find(pitches.begin(), pitches.end(), p) == pitches.end()) pitches.push_back(p);
    }
    for (int p : pitches) {
      if (static_cast<int>(score.notes.size()) == n_notes) break;
      score.notes.push_back({onset, 48 * uniform_int(rng, 1, 4), p, kScoreVelocity, 0});
    }
    onset += 48 * uniform_int(rng, 1, 4);
  }
  score.normalize();

  // Shift each onset group by at most `jitter` of its shorter neighbouring IOI.
  std::map<std::int64_t, std::int64_t> shifted;
  for (std::size_t g = 0; g < group_onsets.size(); ++g) {
    std::int64_t ioi = std::numeric_limits<std::int64_t>::max();
    if (g > 0) ioi = std::min(ioi, group_onsets[g] - group_onsets[g - 1]);
    if (g + 1 < group_onsets.size()) ioi = std::min(ioi, group_onsets[g + 1] - group_onsets[g]);
    if (ioi == std::numeric_limits<std::int64_t>::max()) ioi = 96;
    const double shift = rng.uniform(-jitter, jitter) * static_cast<double>(ioi);
    shifted[group_onsets[g]] = group_onsets[g] + 96 + static_cast<std::int64_t>(std::trunc(shift));
  }

  struct Tagged {
    NoteEvent note;
    int source;  // score index, -1 for inserted notes
  };
  std::vector<Tagged> perf;
  for (std::size_t i = 0; i < score.notes.size(); ++i) {
    if (rng.uniform() < edit_rate) continue;
    NoteEvent n = score.notes[i];
    n.onset_ticks = shifted.at(n.onset_ticks);
    n.velocity = uniform_int(rng, 20, 110);
    n.duration_ticks = std::max<std::int64_t>(1, n.duration_ticks + uniform_int(rng, -20, 20));
    perf.push_back({n, static_cast<int>(i)});
  }
  const std::int64_t end = onset + 96;
  for (int k = 0; k < static_cast<int>(std::lround(edit_rate * n_notes)); ++k) {
    perf.push_back({NoteEvent{uniform_int(rng, 0, static_cast<int>(end)), 30, uniform_int(rng, 48, 72), 50, 0}, -1});
  }
  std::stable_sort(perf.begin(), perf.end(), [](const Tagged& a, const Tagged& b) { return canonical_less(a.note, b.note); });
  piece.perf.ppq = kBeatResolution;
  piece.perf.tempi = score.tempi;
  for (std::size_t j = 0; j < perf.size(); ++j) {
    piece.perf.notes.push_back(perf[j].note);
    if (perf[j].source >= 0) piece.truth.emplace_back(perf[j].source, static_cast<int>(j));
  }
  std::sort(piece.truth.begin(), piece.truth.end());
  return piece;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check in double precision.

inline constexpr double kZeroGradient = 1e-7;

struct GradCheck {
  std::vector<std::pair<std::string, double>> rel_error;  // per tensor
  double worst = 0.0;
};

/// Random segment of `len` positions, the last `n_pad` padded.
inline TokenSegment random_segment(Rng& rng, int len, int n_pad, int performer) {
  const VocabSpec v;
  TokenSegment seg;
  seg.performer_id = performer;
  for (int i = 0; i < len; ++i) {
    TokenTuple t;
    if (i < len - n_pad) {
      for (int f = 0; f < kNumFeatures; ++f) {
        t[static_cast<Feature>(f)] = uniform_int(rng, kNumSpecials, v.size(static_cast<Feature>(f)) - 1);
      }
    }
    seg.tuples.push_back(t);
    seg.pad_mask.push_back(i >= len - n_pad);
  }
  return seg;
}

/// Objective sum_k w_k * CE_k (summed over non-pad positions). Dropout, if
/// configured, uses the same mask on every evaluation. Up to `per_tensor`
/// entries of each tensor are compared, always including the entries with
/// the largest analytic gradient.
inline GradCheck gradient_check(const M2MConfig& cfg, const TokenSegment& input, const TokenSegment& target,
                                std::array<double, kNumHeads> w, std::uint64_t dropout_seed, int per_tensor = 48,
                                double h = 1e-6) {
  M2MModelT<double> model(cfg);
  auto objective = [&](std::array<Mat<double>, kNumHeads>* dl) {
    ForwardCache<double> cache;
    Rng drop(dropout_seed);
    const auto dist = model.forward(input, cache, &drop);
    const TaskLosses l = cross_entropy_sum<double>(dist, target, dl, 1.0);
    double total = 0.0;
    for (int k = 0; k < kNumHeads; ++k) total += w[k] * l[k];
    if (dl != nullptr) {
      for (int k = 0; k < kNumHeads; ++k) (*dl)[k] *= w[k];
      M2MParams<double> grads = model.params().zeros_like();
      model.backward(cache, {&(*dl)[0], &(*dl)[1], &(*dl)[2]}, grads);
      return std::make_pair(total, grads);
    }
    return std::make_pair(total, M2MParams<double>{});
  };
  std::array<Mat<double>, kNumHeads> dl;
  const M2MParams<double> analytic = objective(&dl).second;

  std::vector<Mat<double>*> params;
  std::vector<const Mat<double>*> grads;
  std::vector<std::string> names;
  model.params().visit([&](const std::string& n, Mat<double>& m) {
    params.push_back(&m);
    names.push_back(n);
  });
  analytic.visit([&](const std::string&, const Mat<double>& m) { grads.push_back(&m); });

  GradCheck out;
  Rng pick(dropout_seed ^ 0xABCDEFULL);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat<double>& m = *params[t];
    const Mat<double>& g = *grads[t];
    const Eigen::Index size = m.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
    for (Eigen::Index i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::partial_sort(idx.begin(), idx.begin() + std::min<Eigen::Index>(size, per_tensor / 2), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return std::abs(g.data()[a]) > std::abs(g.data()[b]); });
    std::vector<Eigen::Index> chosen(idx.begin(), idx.begin() + std::min<Eigen::Index>(size, per_tensor / 2));
    while (static_cast<Eigen::Index>(chosen.size()) < std::min<Eigen::Index>(size, per_tensor)) {
      chosen.push_back(static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(size))));
    }
    double diff2 = 0.0, num2 = 0.0, ana2 = 0.0;
    for (Eigen::Index i : chosen) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double up = objective(nullptr).first;
      m.data()[i] = orig - h;
      const double down = objective(nullptr).first;
      m.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = g.data()[i];
      diff2 += (numeric - a) * (numeric - a);
      num2 += numeric * numeric;
      ana2 += a * a;
    }
    // A tensor whose gradient vanishes identically (the key bias: softmax
    // ignores a per-row shift) has no scale to be relative to; there the
    // absolute difference is reported instead.
    const double denom = std::sqrt(num2) + std::sqrt(ana2);
    const double rel = denom > kZeroGradient ? std::sqrt(diff2) / denom : std::sqrt(diff2);
    out.rel_error.emplace_back(names[t], rel);
    out.worst = std::max(out.worst, rel);
  }
  return out;
}

inline M2MConfig gradcheck_config(double dropout) {
  M2MConfig c;
  c.n_layers = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.dropout = dropout;
  c.n_performers = 2;
  c.max_seq_len = 8;
  c.seed = 3;
  return c;
}

}  // namespace s2a::testing
