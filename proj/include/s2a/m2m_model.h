#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "s2a/midi_io.h"
#include "s2a/tokenizer.h"

namespace s2a {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Output heads, in the order the model emits them.
enum Head : int { kVelHead = 0, kIoiHead = 1, kDurHead = 2 };
inline constexpr int kNumHeads = 3;
inline constexpr std::array<Feature, kNumHeads> kHeadFeatures{Feature::kVelocity, Feature::kIoi, Feature::kDuration};

struct M2MConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  double dropout = 0.1;
  int n_performers = 4;
  int d_embed = 0;  // per-feature embedding width; 0 means d_model / 4
  int max_seq_len = kSegmentLength;
  std::uint64_t seed = 0;
  VocabSpec vocab;

  int embed_dim() const { return d_embed > 0 ? d_embed : d_model / 4; }
  void validate() const;

  /// Roughly 12M parameters: 6 layers, d_model 384.
  static M2MConfig full_scale();
};

/// Random source used for initialization, dropout, shuffling and sampling.
/// mt19937_64 is fully specified by the standard; the conversions below are
/// ours so results do not depend on the library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
struct LayerParams {
  Mat<T> wq, wk, wv, wo, bq, bk, bv, bo;
  Mat<T> ln1_g, ln1_b;
  Mat<T> w1, b1, w2, b2;
  Mat<T> ln2_g, ln2_b;
};

/// All trainable tensors. Biases and norm parameters are 1 x n matrices.
template <typename T>
struct M2MParams {
  std::array<Mat<T>, kNumFeatures> embed;  // vocab_f x d_embed
  Mat<T> w_in, b_in;                       // (6 d_embed) x d_model
  std::vector<LayerParams<T>> layers;
  Mat<T> performer;  // n_performers x d_model
  std::array<Mat<T>, kNumHeads> head_w, head_b;

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  M2MParams zeros_like() const;
  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;
};

template <typename T>
struct OutputDistributions {
  std::array<Mat<T>, kNumHeads> logits;  // L x {68, 772, 1156}
};

/// Activations kept from a forward pass for backpropagation.
template <typename T>
struct ForwardCache {
  struct Layer {
    Mat<T> x, q, k, v, o;
    std::vector<Mat<T>> attn;  // per head, L x L
    Mat<T> att_drop, xhat1, inv_std1, h, f1, g, ffn_drop, xhat2, inv_std2;
  };
  std::vector<TokenTuple> tokens;
  std::vector<bool> pad_mask;
  int performer_id = 0;
  Mat<T> x_cat, in_drop;
  std::vector<Layer> layers;
  Mat<T> final_hidden;
};

template <typename T>
class M2MModelT {
 public:
  explicit M2MModelT(const M2MConfig& config);
  M2MModelT(const M2MConfig& config, M2MParams<T> params);

  const M2MConfig& config() const { return config_; }
  M2MParams<T>& params() { return params_; }
  const M2MParams<T>& params() const { return params_; }

  /// Inference forward pass; dropout disabled. Throws DataError on an
  /// out-of-vocabulary token or performer id.
  OutputDistributions<T> forward(const TokenSegment& segment) const;

  /// Forward pass recording activations. Dropout is applied when
  /// `dropout_rng` is non-null and the configured rate is positive.
  OutputDistributions<T> forward(const TokenSegment& segment, ForwardCache<T>& cache, Rng* dropout_rng) const;

  /// Accumulates parameter gradients into `grads` given logit gradients.
  /// Null entries in `dlogits` are treated as zero.
  void backward(const ForwardCache<T>& cache, const std::array<const Mat<T>*, kNumHeads>& dlogits,
                M2MParams<T>& grads) const;

 private:
  void check_input(const TokenSegment& segment) const;

  M2MConfig config_;
  M2MParams<T> params_;
  Mat<T> positional_;
};

using M2MModel = M2MModelT<float>;

extern template class M2MModelT<float>;
extern template class M2MModelT<double>;
extern template struct M2MParams<float>;
extern template struct M2MParams<double>;

template <typename T>
template <typename F>
void M2MParams<T>::visit(F&& f) {
  static const char* kFeat[kNumFeatures] = {"pitch", "velocity", "duration", "ioi", "position", "bar"};
  static const char* kHead[kNumHeads] = {"vel", "ioi", "dur"};
  for (int i = 0; i < kNumFeatures; ++i) f(std::string("embed.") + kFeat[i], embed[i]);
  f(std::string("input_proj.w"), w_in);
  f(std::string("input_proj.b"), b_in);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& L = layers[l];
    f(p + "attn.wq", L.wq); f(p + "attn.bq", L.bq);
    f(p + "attn.wk", L.wk); f(p + "attn.bk", L.bk);
    f(p + "attn.wv", L.wv); f(p + "attn.bv", L.bv);
    f(p + "attn.wo", L.wo); f(p + "attn.bo", L.bo);
    f(p + "norm1.g", L.ln1_g); f(p + "norm1.b", L.ln1_b);
    f(p + "ffn.w1", L.w1); f(p + "ffn.b1", L.b1);
    f(p + "ffn.w2", L.w2); f(p + "ffn.b2", L.b2);
    f(p + "norm2.g", L.ln2_g); f(p + "norm2.b", L.ln2_b);
  }
  f(std::string("performer"), performer);
  for (int h = 0; h < kNumHeads; ++h) {
    f(std::string("head.") + kHead[h] + ".w", head_w[h]);
    f(std::string("head.") + kHead[h] + ".b", head_b[h]);
  }
}

template <typename T>
template <typename F>
void M2MParams<T>::visit(F&& f) const {
  const_cast<M2MParams<T>*>(this)->visit([&](const std::string& name, Mat<T>& m) { f(name, static_cast<const Mat<T>&>(m)); });
}

// ---------------------------------------------------------------------------
// Decoding

struct SampledTokens {
  std::vector<int> velocity, ioi, duration;
};

inline constexpr double kArgmaxTemperature = 1e-6;

/// Draws one token id from `logits`. Special ids 0-3 are excluded. Below
/// kArgmaxTemperature this is argmax (lowest id on ties).
int sample_categorical(const float* logits, int size, double temperature, double top_p, Rng& rng);

/// Temperature + nucleus sampling at every position of every head.
SampledTokens sample(const OutputDistributions<float>& dist, double temperature, double top_p, std::uint64_t seed);

/// Score MIDI in, expressive performance MIDI out (ppq 96). Pitches and note
/// count come from the score; velocity, IOI and duration from the model.
NoteSequence predict_performance(const M2MModel& model, const NoteSequence& score, int performer_id,
                                 double temperature, double top_p, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints: "S2AM2M\0\1" magic, u32 header length, JSON header (config,
// tensor names and shapes), then little-endian float32 tensor data.

void save_checkpoint(const M2MModel& model, const std::string& path);
M2MModel load_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize_checkpoint(const M2MModel& model);
M2MModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace s2a
