#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "s2a/midi_io.h"

namespace s2a {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 24000;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  bool operator==(const Waveform&) const = default;
};

/// Additive piano voice. Every field is a knob of render_audio.
struct SynthParams {
  int sample_rate = 24000;
  int harmonics = 8;
  double rolloff = 1.3;       // partial h has amplitude h^-rolloff
  double decay_tau = 0.8;     // seconds at middle C, halves every two octaves up
  double attack = 0.005;      // linear ramp, seconds
  double release = 0.010;     // linear ramp after note-off, seconds
  double peak = 0.95;         // normalization target
};

struct Spectrogram {
  RealMatrix frames;  // T x 128, one column per MIDI pitch
  double frame_rate = 0.0;
};

struct Chromagram {
  RealMatrix frames;  // T x 12
  double frame_rate = 0.0;
};

inline double midi_to_hz(double pitch) { return 440.0 * std::exp2((pitch - 69.0) / 12.0); }

/// Cell (t, p) = velocity/127 of the loudest note of pitch p sounding at the
/// start of frame t.
RealMatrix piano_roll(const NoteSequence& seq, double frame_rate);

/// Deterministic additive rendering, peak-normalized to params.peak.
Waveform render_audio(const NoteSequence& seq, const SynthParams& params = {});
/// Same mix before peak normalization; amplitude is linear in velocity.
std::vector<double> render_unnormalized(const NoteSequence& seq, const SynthParams& params = {});

inline constexpr int kDefaultFrameLength = 4096;
inline constexpr int kDefaultHop = 240;

/// Hann-windowed magnitude STFT through a triangular filterbank with one
/// filter per MIDI pitch, compressed with log(1 + x). Frame t starts at
/// sample t * hop and is zero-padded past the end. Filters whose center lies
/// above Nyquist produce all-zero columns, as do low filters too narrow to
/// contain an FFT bin.
Spectrogram midi_spectrogram(const Waveform& w, int frame_len = kDefaultFrameLength, int hop = kDefaultHop);

/// Weights of the pitch filterbank, 128 x (frame_len / 2 + 1).
RealMatrix midi_filterbank(int sample_rate, int frame_len);

/// Octave-folded spectrogram, rows L1-normalized (silent rows stay zero).
Chromagram chromagram(const Spectrogram& s);

inline constexpr double kSegmentSeconds = 9.6;

/// Start sample of each segment; the last one reaches the end of the input.
std::vector<std::size_t> segment_starts(std::size_t n_samples, int sample_rate, double seg_seconds,
                                        double overlap_seconds);
std::vector<Waveform> segment_audio(const Waveform& w, double seg_seconds = kSegmentSeconds,
                                    double overlap_seconds = 0.0);

struct StitchResult {
  Waveform audio;
  int lag = 0;           // b[j] lines up with a[size(a) - window + j + lag]
  bool fallback = false;  // inputs too short to correlate; butt-joined
};

/// Joins `b` after `a`. The correlation window is the fade length; the lag in
/// [-max_lag, max_lag] maximizing normalized cross-correlation of a's tail
/// window against b's head is chosen (ties: smaller |lag|, then negative),
/// and the two are joined with an equal-power crossfade.
StitchResult concat_crosscorr(const Waveform& a, const Waveform& b, double max_lag_seconds, double fade_seconds);

/// render -> segment -> stitch. Inputs no longer than one segment are
/// returned unchanged.
Waveform stitch_segments(const std::vector<Waveform>& segments, double max_lag_seconds, double fade_seconds);

/// RIFF/WAVE, 16-bit PCM, mono.
std::vector<std::uint8_t> encode_wav(const Waveform& w);
Waveform decode_wav(const std::vector<std::uint8_t>& bytes);
void write_wav(const std::string& path, const Waveform& w);

/// Raw little-endian float32 matrix at `base.f32` plus `base.json`
/// describing rows, cols and frame rate.
void write_matrix_f32(const std::string& base, const RealMatrix& m, double frame_rate);

}  // namespace s2a
