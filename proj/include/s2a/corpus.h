#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2a/midi_io.h"

namespace s2a {

/// How one synthetic performer deviates from the score.
struct PerformerProfile {
  int base_velocity = 64;
  double velocity_arch_depth = 24.0;  // peak of the phrase-level arch, velocity units
  double pitch_tilt = 0.3;            // velocity per semitone above middle C
  double rubato_amplitude = 0.15;     // relative IOI stretch over a phrase
  double articulation_ratio = 1.0;    // performed / notated duration
};

struct SyntheticCorpusSpec {
  int n_pieces = 8;
  int notes_per_piece = 256;
  int n_performers = 2;
  std::vector<PerformerProfile> profiles;  // empty: default_profile(i)
  std::uint64_t seed = 0;

  PerformerProfile profile(int performer) const;
};

inline constexpr std::int64_t kPhraseTicks = 4 * 4 * 96;  // four 4/4 bars at 96 ticks per beat

PerformerProfile default_profile(int performer);

/// Quantized score on the 96-tick grid: 4/4, constant velocity 60, melody
/// with occasional two- and three-note chords in A1..C7.
NoteSequence generate_score(std::uint64_t seed, int n_notes);

/// Applies a profile note by note. The output keeps the score's note order
/// and count, so the ground-truth alignment is the identity.
NoteSequence perform(const NoteSequence& score, const PerformerProfile& profile);

struct CorpusEntry {
  std::string piece;        // e.g. "piece_003"
  int performer = 0;
  std::string score;        // paths relative to the corpus root
  std::string performance;
  std::string alignment;
  std::string split;        // train, valid or test
};

/// 8:1:1 per performer; the test share is floored but at least one item
/// once a performer has two or more pieces.
std::vector<std::string> assign_splits(int n_items);

/// Writes scores/, performances/, alignments/ and manifest.json under `root`.
std::vector<CorpusEntry> write_corpus(const SyntheticCorpusSpec& spec, const std::string& root);
std::vector<CorpusEntry> read_manifest(const std::string& root);

}  // namespace s2a
