#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2a/align.h"
#include "s2a/corpus.h"
#include "s2a/error.h"
#include "s2a/m2m_model.h"
#include "s2a/metrics.h"
#include "s2a/synth.h"
#include "s2a/trainer.h"

namespace s2a {

/// Evaluation found no matched notes in any item.
class EmptyEvaluationError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kConfigSchemaVersion = 1;

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 0.9;
  std::uint64_t seed = 0;
  int performer_id = 0;
};

struct SynthStageConfig {
  SynthParams params;
  double segment_seconds = kSegmentSeconds;
  double overlap_seconds = 0.2;  // also the crossfade length
  double max_lag_seconds = 0.05;
  int frame_len = kDefaultFrameLength;
  int hop = kDefaultHop;
};

/// Everything a run needs. Unknown keys in the JSON form are rejected, so a
/// typo cannot silently fall back to a default.
struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  M2MConfig model;
  TrainConfig train;
  SamplingConfig sampling;
  SynthStageConfig synth;
  SyntheticCorpusSpec corpus;
  double gap_penalty = kDefaultGapPenalty;
  bool audio_metrics = true;
};

PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::string& path);

/// Reads a MIDI file, logging parser warnings.
NoteSequence load_midi(const std::string& path);

/// Training pairs for one aligned (score, performance) couple. Both are
/// resampled to the 96-tick grid; score notes without a partner are padded
/// in the target and carry no loss.
std::vector<TrainingPair> make_training_pairs(const NoteSequence& score, const NoteSequence& performance,
                                              const AlignmentMap& alignment, int performer_id);

// Commands. Each returns normally on success and throws Error subclasses
// otherwise; the CLI maps them to exit codes.

std::vector<CorpusEntry> cmd_demo_data(const PipelineConfig& cfg, const std::string& out_dir);
void cmd_tokenize(const std::string& midi_path, const std::string& out_path, bool is_score);
AlignmentMap cmd_align(const std::string& score_path, const std::string& perf_path, const std::string& out_path,
                       double gap_penalty);
TrainLog cmd_train(const PipelineConfig& cfg, const std::string& corpus_dir, const std::string& checkpoint_path,
                   const std::string& log_path);
/// One score file, written to `out_path`.
void cmd_render(const PipelineConfig& cfg, const std::string& checkpoint_path, const std::string& score_path,
                const std::string& out_path);
/// Every corpus entry in `split`, each rendered with its own performer id to
/// out_dir/p<id>_<piece>.mid. Returns the written paths.
std::vector<std::string> cmd_render_corpus(const PipelineConfig& cfg, const std::string& checkpoint_path,
                                           const std::string& corpus_dir, const std::string& split,
                                           const std::string& out_dir);
/// MIDI file or directory of MIDI files to WAV. Returns the written paths.
std::vector<std::string> cmd_synth(const PipelineConfig& cfg, const std::string& input, const std::string& output);
/// Pairs files by name across the two directories, writes report.json,
/// report.csv and summary.txt into out_dir.
MetricReport cmd_evaluate(const PipelineConfig& cfg, const std::string& pred_dir, const std::string& target_dir,
                          const std::string& out_dir);

}  // namespace s2a
