#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "s2a/midi_io.h"

namespace s2a {

enum class Feature : int { kPitch = 0, kVelocity = 1, kDuration = 2, kIoi = 3, kPosition = 4, kBar = 5 };
inline constexpr int kNumFeatures = 6;

// Special token ids shared by every feature vocabulary.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kMask = 3;
inline constexpr int kNumSpecials = 4;

inline constexpr int kBeatResolution = 96;
inline constexpr int kSegmentLength = 256;
inline constexpr int kScoreVelocity = 60;
inline constexpr int kLowestPianoKey = 21;
inline constexpr int kHighestPianoKey = 108;

/// Per-feature vocabulary layout: 4 specials followed by the value tokens.
///
///   pitch     88 keys (A0..C8)            -> 92
///   velocity  64 bins of width 2          -> 68
///   duration  1..1152 ticks               -> 1156
///   ioi       0..767 ticks                -> 772
///   position  0..383 ticks within a bar   -> 388
///   bar       0..2999                     -> 3004
struct VocabSpec {
  std::array<int, kNumFeatures> value_tokens{88, 64, 1152, 768, 384, 3000};

  VocabSpec();  // checks the layout
  int size(Feature f) const { return value_tokens[static_cast<int>(f)] + kNumSpecials; }
  int values(Feature f) const { return value_tokens[static_cast<int>(f)]; }
  std::array<int, kNumFeatures> sizes() const;
};

const char* feature_name(Feature f);

struct TokenTuple {
  int pitch = kPad;
  int velocity = kPad;
  int duration = kPad;
  int ioi = kPad;
  int position = kPad;
  int bar = kPad;

  int operator[](Feature f) const;
  int& operator[](Feature f);
  bool operator==(const TokenTuple&) const = default;
};

struct TokenSegment {
  std::vector<TokenTuple> tuples;  // always kSegmentLength after segment()
  std::vector<bool> pad_mask;      // true where the position is padding
  int performer_id = 0;
  int source_offset = 0;

  int valid_length() const;
};

/// Tokenizes a sequence already on the 96-tick grid (see resample_grid).
/// Score tokenization replaces every velocity with 60. Throws DataError
/// naming the note index when a pitch lies outside the piano range.
std::vector<TokenTuple> tokenize(const NoteSequence& seq, bool is_score);

/// Rebuilds a performance from score pitches and predicted velocity/IOI/
/// duration tokens. Output ppq is 96 with a single tempo event.
NoteSequence detokenize(const std::vector<int>& pitch_toks, const std::vector<int>& velocity_toks,
                        const std::vector<int>& ioi_toks, const std::vector<int>& duration_toks,
                        const std::vector<TimeSignatureEvent>& time_signatures,
                        int microseconds_per_quarter = kDefaultTempo);

/// Consecutive non-overlapping windows of `length` tuples; the last window is
/// PAD-filled.
std::vector<TokenSegment> segment(const std::vector<TokenTuple>& tuples, int performer_id,
                                  int length = kSegmentLength);

/// Tab-separated dump with a header naming the features.
std::string format_token_dump(const std::vector<TokenTuple>& tuples);
std::vector<TokenTuple> parse_token_dump(const std::string& text);

}  // namespace s2a
