#include "s2a/synth.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "s2a/error.h"

namespace s2a {

RealMatrix piano_roll(const NoteSequence& seq, double frame_rate) {
  if (!(frame_rate > 0.0)) throw DataError("piano_roll: frame rate must be positive");
  const double end = ticks_to_seconds(seq, seq.end_tick());
  const auto frames = static_cast<Eigen::Index>(std::ceil(end * frame_rate));
  RealMatrix roll = RealMatrix::Zero(frames, 128);
  for (const auto& n : seq.notes) {
    // frame t is active when its start time t / frame_rate lies in [on, off)
    const auto first = static_cast<Eigen::Index>(std::ceil(ticks_to_seconds(seq, n.onset_ticks) * frame_rate));
    const auto last = static_cast<Eigen::Index>(std::ceil(ticks_to_seconds(seq, n.offset_ticks()) * frame_rate));
    const double level = n.velocity / 127.0;
    for (Eigen::Index t = first; t < std::min(last, frames); ++t) {
      roll(t, n.pitch) = std::max(roll(t, n.pitch), level);
    }
  }
  return roll;
}

std::vector<double> render_unnormalized(const NoteSequence& seq, const SynthParams& p) {
  const double sr = p.sample_rate;
  const double nyquist = sr / 2.0;
  std::size_t total = 0;
  struct Voice {
    std::size_t start, length;
    double duration;
    const NoteEvent* note;
  };
  std::vector<Voice> voices;
  voices.reserve(seq.notes.size());
  for (const auto& n : seq.notes) {
    const double on = ticks_to_seconds(seq, n.onset_ticks);
    const double off = ticks_to_seconds(seq, n.offset_ticks());
    const auto start = static_cast<std::size_t>(std::llround(on * sr));
    const auto length = static_cast<std::size_t>(std::ceil((off - on + p.release) * sr));
    voices.push_back({start, length, off - on, &n});
    total = std::max(total, start + length);
  }

  std::vector<double> mix(total, 0.0);
  std::vector<double> amp(static_cast<std::size_t>(std::max(p.harmonics, 0)) + 1, 0.0);
  for (int h = 1; h <= p.harmonics; ++h) amp[static_cast<std::size_t>(h)] = std::pow(static_cast<double>(h), -p.rolloff);
  for (const auto& v : voices) {
    const double f0 = midi_to_hz(v.note->pitch);
    const double tau = p.decay_tau * std::exp2((60.0 - v.note->pitch) / 24.0);
    const double level = v.note->velocity / 127.0;
    int n_harm = 0;
    while (n_harm < p.harmonics && (n_harm + 1) * f0 < nyquist) ++n_harm;
    for (std::size_t i = 0; i < v.length; ++i) {
      const double t = static_cast<double>(i) / sr;
      double env = std::exp(-t / tau);
      if (t < p.attack) env *= t / p.attack;
      if (t > v.duration) env *= std::max(0.0, 1.0 - (t - v.duration) / p.release);
      if (env == 0.0 || n_harm == 0) continue;
      // sin(h x) by the Chebyshev recurrence from sin x and cos x
      const double x = 2.0 * std::numbers::pi * f0 * t;
      const double s1 = std::sin(x), c2 = 2.0 * std::cos(x);
      double prev = 0.0, cur = s1, s = amp[1] * s1;
      for (int h = 2; h <= n_harm; ++h) {
        const double next = c2 * cur - prev;
        prev = cur;
        cur = next;
        s += amp[static_cast<std::size_t>(h)] * cur;
      }
      mix[v.start + i] += level * env * s;
    }
  }
  return mix;
}

Waveform render_audio(const NoteSequence& seq, const SynthParams& p) {
  const auto mix = render_unnormalized(seq, p);
  double peak = 0.0;
  for (double x : mix) peak = std::max(peak, std::abs(x));
  const double gain = peak > 0.0 ? p.peak / peak : 0.0;
  Waveform w;
  w.sample_rate = p.sample_rate;
  w.samples.resize(mix.size());
  for (std::size_t i = 0; i < mix.size(); ++i) w.samples[i] = static_cast<float>(mix[i] * gain);
  return w;
}

RealMatrix midi_filterbank(int sample_rate, int frame_len) {
  const int bins = frame_len / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  RealMatrix fb = RealMatrix::Zero(128, bins);
  for (int m = 0; m < 128; ++m) {
    const double lo = midi_to_hz(m - 1), center = midi_to_hz(m), hi = midi_to_hz(m + 1);
    if (center > nyquist) continue;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / frame_len;
      if (f > lo && f <= center) {
        fb(m, k) = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        fb(m, k) = (hi - f) / (hi - center);
      }
    }
  }
  return fb;
}

namespace {

struct FftPlan {
  FftPlan(int n) : in(fftw_alloc_real(static_cast<std::size_t>(n))), out(fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1))) {
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  double* in;
  fftw_complex* out;
  fftw_plan plan;
};

}  // namespace

Spectrogram midi_spectrogram(const Waveform& w, int frame_len, int hop) {
  if (hop <= 0 || frame_len < hop) throw DataError("midi_spectrogram: need frame_len >= hop > 0");
  const std::size_t n = w.samples.size();
  const auto frames = static_cast<Eigen::Index>((n + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop));
  const int bins = frame_len / 2 + 1;
  Spectrogram s;
  s.frame_rate = static_cast<double>(w.sample_rate) / hop;
  s.frames = RealMatrix::Zero(frames, 128);
  if (frames == 0) return s;

  std::vector<double> window(static_cast<std::size_t>(frame_len));
  for (int i = 0; i < frame_len; ++i) window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / frame_len);
  const RealMatrix fb = midi_filterbank(w.sample_rate, frame_len);
  // Each triangle covers a short run of bins; remember [first, last).
  std::vector<std::pair<int, int>> support(128, {0, 0});
  for (int m = 0; m < 128; ++m) {
    int first = bins, last = 0;
    for (int k = 0; k < bins; ++k) {
      if (fb(m, k) != 0.0) {
        first = std::min(first, k);
        last = k + 1;
      }
    }
    if (last > first) support[static_cast<std::size_t>(m)] = {first, last};
  }

  FftPlan fft(frame_len);
  Eigen::VectorXd mag(bins);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < frame_len; ++i) {
      const std::size_t idx = start + static_cast<std::size_t>(i);
      fft.in[i] = idx < n ? w.samples[idx] * window[static_cast<std::size_t>(i)] : 0.0;
    }
    fftw_execute(fft.plan);
    for (int k = 0; k < bins; ++k) mag(k) = std::sqrt(fft.out[k][0] * fft.out[k][0] + fft.out[k][1] * fft.out[k][1]);
    for (int m = 0; m < 128; ++m) {
      const auto [first, last] = support[static_cast<std::size_t>(m)];
      double acc = 0.0;
      for (int k = first; k < last; ++k) acc += fb(m, k) * mag(k);
      s.frames(t, m) = std::log1p(acc);
    }
  }
  return s;
}

Chromagram chromagram(const Spectrogram& s) {
  Chromagram c;
  c.frame_rate = s.frame_rate;
  c.frames = RealMatrix::Zero(s.frames.rows(), 12);
  for (Eigen::Index t = 0; t < s.frames.rows(); ++t) {
    for (int m = 0; m < s.frames.cols(); ++m) c.frames(t, m % 12) += s.frames(t, m);
    const double total = c.frames.row(t).sum();
    if (total > 0.0) c.frames.row(t) /= total;
  }
  return c;
}

std::vector<std::size_t> segment_starts(std::size_t n_samples, int sample_rate, double seg_seconds,
                                        double overlap_seconds) {
  const auto seg = static_cast<std::size_t>(std::llround(seg_seconds * sample_rate));
  const auto overlap = static_cast<std::size_t>(std::llround(overlap_seconds * sample_rate));
  if (seg == 0 || overlap >= seg) throw DataError("segment_audio: need 0 <= overlap < segment length");
  std::vector<std::size_t> starts;
  if (n_samples == 0) return starts;
  std::size_t start = 0;
  starts.push_back(start);
  while (start + seg < n_samples) {
    start += seg - overlap;
    starts.push_back(start);
  }
  return starts;
}

std::vector<Waveform> segment_audio(const Waveform& w, double seg_seconds, double overlap_seconds) {
  const auto seg = static_cast<std::size_t>(std::llround(seg_seconds * w.sample_rate));
  std::vector<Waveform> out;
  for (std::size_t start : segment_starts(w.samples.size(), w.sample_rate, seg_seconds, overlap_seconds)) {
    const std::size_t end = std::min(w.samples.size(), start + seg);
    Waveform piece;
    piece.sample_rate = w.sample_rate;
    piece.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         w.samples.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(piece));
  }
  return out;
}

namespace {

constexpr double kCorrelationTieTolerance = 1e-12;

Waveform crossfade_join(const Waveform& a, std::size_t a_end, const Waveform& b, std::size_t fade) {
  Waveform out;
  out.sample_rate = a.sample_rate;
  out.samples.reserve(a_end + b.samples.size());
  out.samples.insert(out.samples.end(), a.samples.begin(), a.samples.begin() + static_cast<std::ptrdiff_t>(a_end));
  for (std::size_t j = 0; j < fade; ++j) {
    const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(fade);
    const double ga = std::cos(0.5 * std::numbers::pi * x);
    const double gb = std::sin(0.5 * std::numbers::pi * x);
    out.samples.push_back(static_cast<float>(ga * a.samples[a_end + j] + gb * b.samples[j]));
  }
  out.samples.insert(out.samples.end(), b.samples.begin() + static_cast<std::ptrdiff_t>(fade), b.samples.end());
  return out;
}

}  // namespace

StitchResult concat_crosscorr(const Waveform& a, const Waveform& b, double max_lag_seconds, double fade_seconds) {
  if (a.sample_rate != b.sample_rate) throw DataError("concat_crosscorr: sample rates differ");
  const auto window = static_cast<std::size_t>(std::llround(fade_seconds * a.sample_rate));
  const auto max_lag = static_cast<std::size_t>(std::llround(max_lag_seconds * a.sample_rate));
  const std::size_t na = a.samples.size(), nb = b.samples.size();

  StitchResult r;
  if (window == 0 || na < window + max_lag || nb < window) {
    const std::size_t fade = std::min({window, na, nb});
    r.audio = crossfade_join(a, na - fade, b, fade);
    r.fallback = true;
    return r;
  }

  // b[j] is compared with a[na - window + lag + j] for j < window - max(lag, 0)
  double best = -std::numeric_limits<double>::infinity();
  const auto max_pos = static_cast<long>(std::min(max_lag, window - 1));
  const auto max_neg = static_cast<long>(max_lag);
  for (long step = 0; step <= std::max(max_pos, max_neg); ++step) {
    for (long lag : {-step, step}) {
      if (step == 0 && lag != 0) continue;
      if (lag > max_pos || -lag > max_neg) continue;
      const std::size_t count = window - static_cast<std::size_t>(std::max(lag, 0L));
      const auto a0 = static_cast<std::size_t>(static_cast<long>(na - window) + lag);
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t j = 0; j < count; ++j) {
        const double x = a.samples[a0 + j], y = b.samples[j];
        ab += x * y;
        aa += x * x;
        bb += y * y;
      }
      const double ncc = (aa > 0.0 && bb > 0.0) ? ab / std::sqrt(aa * bb) : 0.0;
      if (ncc > best + kCorrelationTieTolerance) {
        best = ncc;
        r.lag = static_cast<int>(lag);
      }
    }
  }
  const std::size_t fade = window - static_cast<std::size_t>(std::max(r.lag, 0));
  r.audio = crossfade_join(a, static_cast<std::size_t>(static_cast<long>(na - window) + r.lag), b, fade);
  return r;
}

Waveform stitch_segments(const std::vector<Waveform>& segments, double max_lag_seconds, double fade_seconds) {
  if (segments.empty()) return {};
  Waveform out = segments.front();
  for (std::size_t i = 1; i < segments.size(); ++i) {
    out = concat_crosscorr(out, segments[i], max_lag_seconds, fade_seconds).audio;
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_matrix_f32(const std::string& base, const RealMatrix& m, double frame_rate) {
  std::ofstream raw(base + ".f32", std::ios::binary);
  if (!raw) throw DataError("cannot write " + base + ".f32");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float v = static_cast<float>(m.data()[i]);
    raw.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  nlohmann::json meta{{"dtype", "float32"}, {"byte_order", "little"}, {"layout", "row-major"},
                      {"rows", m.rows()},   {"cols", m.cols()},       {"frame_rate", frame_rate}};
  std::ofstream js(base + ".json");
  if (!js) throw DataError("cannot write " + base + ".json");
  js << meta.dump(2) << '\n';
}

}  // namespace s2a
