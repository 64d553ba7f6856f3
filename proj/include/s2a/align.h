#pragma once

#include <string>
#include <utility>
#include <vector>

#include "s2a/midi_io.h"

namespace s2a {

struct AlignmentMap {
  std::vector<std::pair<int, int>> pairs;  // (score index, performance index)
  std::vector<int> unmatched_score;
  std::vector<int> unmatched_perf;

  bool operator==(const AlignmentMap&) const = default;
};

inline constexpr double kDefaultGapPenalty = 0.5;

/// Global alignment of two canonically ordered note lists. Only equal pitches
/// may be paired (+1 each), every skipped note costs `gap_penalty`. Among
/// equally scored alignments the one with the smallest summed onset
/// difference (in beats) over matched pairs wins.
///
/// With gap_penalty >= 0 the score is monotone in the number of matches, so
/// the DP maximizes matches and breaks ties on onset cost.
AlignmentMap align_notes(const NoteSequence& score, const NoteSequence& perf,
                         double gap_penalty = kDefaultGapPenalty);

/// Score of an alignment under the align_notes objective.
double alignment_score(const AlignmentMap& map, std::size_t n_score, std::size_t n_perf, double gap_penalty);
/// Summed |onset difference| in beats over matched pairs.
double alignment_onset_cost(const AlignmentMap& map, const NoteSequence& score, const NoteSequence& perf);

/// {"pairs": [[i,j],...], "unmatched_score": [...], "unmatched_perf": [...]}
std::string alignment_to_json(const AlignmentMap& map);
AlignmentMap alignment_from_json(const std::string& text);

}  // namespace s2a
