#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2a/error.h"
#include "s2a/m2m_model.h"

namespace s2a {

int sample_categorical(const float* logits, int size, double temperature, double top_p, Rng& rng) {
  if (size <= kNumSpecials) throw DataError("sample: vocabulary has no value tokens");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw DataError("sample: top_p must lie in (0, 1]");
  const double u = rng.uniform();  // one draw per call keeps streams aligned

  int best = kNumSpecials;
  for (int i = kNumSpecials + 1; i < size; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  if (temperature < kArgmaxTemperature) return best;

  const double mx = logits[best];
  std::vector<double> prob(static_cast<std::size_t>(size), 0.0);
  double total = 0.0;
  for (int i = kNumSpecials; i < size; ++i) {
    prob[static_cast<std::size_t>(i)] = std::exp((logits[i] - mx) / temperature);
    total += prob[static_cast<std::size_t>(i)];
  }

  std::vector<int> order(static_cast<std::size_t>(size - kNumSpecials));
  std::iota(order.begin(), order.end(), kNumSpecials);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return prob[static_cast<std::size_t>(a)] > prob[static_cast<std::size_t>(b)];
  });

  std::size_t nucleus = 0;
  double mass = 0.0;
  while (nucleus < order.size()) {
    mass += prob[static_cast<std::size_t>(order[nucleus])];
    ++nucleus;
    if (mass >= top_p * total) break;
  }

  double target = u * mass;
  for (std::size_t k = 0; k < nucleus; ++k) {
    target -= prob[static_cast<std::size_t>(order[k])];
    if (target < 0.0) return order[k];
  }
  return order[nucleus - 1];
}

SampledTokens sample(const OutputDistributions<float>& dist, double temperature, double top_p, std::uint64_t seed) {
  Rng rng(seed);
  SampledTokens out;
  std::array<std::vector<int>*, kNumHeads> dst{&out.velocity, &out.ioi, &out.duration};
  const Eigen::Index len = dist.logits[0].rows();
  for (auto* v : dst) v->reserve(static_cast<std::size_t>(len));
  for (Eigen::Index r = 0; r < len; ++r) {
    for (int h = 0; h < kNumHeads; ++h) {
      const auto& m = dist.logits[h];
      dst[h]->push_back(sample_categorical(m.data() + r * m.cols(), static_cast<int>(m.cols()), temperature, top_p, rng));
    }
  }
  return out;
}

NoteSequence predict_performance(const M2MModel& model, const NoteSequence& score, int performer_id,
                                 double temperature, double top_p, std::uint64_t seed) {
  const NoteSequence grid = resample_grid(score, kBeatResolution);
  const auto tuples = tokenize(grid, /*is_score=*/true);
  const int tempo = grid.tempi.empty() ? kDefaultTempo : grid.tempi.front().microseconds_per_quarter;

  std::vector<int> pitch, vel, ioi, dur;
  const auto segments = segment(tuples, performer_id);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    const auto dist = model.forward(seg);
    // per-segment stream so segments are independent of each other's length
    const auto toks = sample(dist, temperature, top_p, seed + 0x9E3779B97F4A7C15ULL * s);
    for (std::size_t k = 0; k < seg.tuples.size(); ++k) {
      if (seg.pad_mask[k]) continue;
      pitch.push_back(seg.tuples[k].pitch);
      vel.push_back(toks.velocity[k]);
      ioi.push_back(toks.ioi[k]);
      dur.push_back(toks.duration[k]);
    }
  }
  return detokenize(pitch, vel, ioi, dur, grid.time_signatures, tempo);
}

}  // namespace s2a
