#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace s2a {

struct NoteEvent {
  std::int64_t onset_ticks = 0;
  std::int64_t duration_ticks = 1;
  int pitch = 60;
  int velocity = 64;
  int channel = 0;

  std::int64_t offset_ticks() const { return onset_ticks + duration_ticks; }
  bool operator==(const NoteEvent&) const = default;
};

/// Canonical note order: onset, then pitch; remaining fields make the order total.
bool canonical_less(const NoteEvent& a, const NoteEvent& b);

struct TempoEvent {
  std::int64_t tick = 0;
  int microseconds_per_quarter = 500000;
  bool operator==(const TempoEvent&) const = default;
};

struct TimeSignatureEvent {
  std::int64_t tick = 0;
  int numerator = 4;
  int denominator_log2 = 2;

  /// Bar length in ticks at the given resolution (quarter note = ppq ticks).
  std::int64_t bar_ticks(int ppq) const;
  bool operator==(const TimeSignatureEvent&) const = default;
};

struct SustainEvent {
  std::int64_t tick = 0;
  int value = 0;
  bool operator==(const SustainEvent&) const = default;
};

inline constexpr int kDefaultTempo = 500000;

struct NoteSequence {
  int ppq = 480;
  std::vector<NoteEvent> notes;
  std::vector<TempoEvent> tempi;
  std::vector<TimeSignatureEvent> time_signatures{TimeSignatureEvent{}};
  std::vector<SustainEvent> sustain_events;

  /// Sorts notes canonically, dedupes tempo/signature ticks (last wins) and
  /// inserts 4/4 at tick 0 when no signature starts there.
  void normalize();
  /// Throws DataError naming the first violated invariant.
  void validate() const;
  /// Largest note offset, or 0 for an empty sequence.
  std::int64_t end_tick() const;

  bool operator==(const NoteSequence&) const = default;
};

struct ParseResult {
  NoteSequence sequence;
  std::vector<std::string> warnings;
};

/// Parses a format 0 or 1 SMF. Throws MidiParseError on malformed input.
ParseResult parse_smf_with_warnings(std::span<const std::uint8_t> bytes);
NoteSequence parse_smf(std::span<const std::uint8_t> bytes);

/// Serializes as format 1: track 0 holds tempo and time signatures, track 1
/// holds notes and sustain pedal. Running status is never emitted.
///
/// Same-pitch notes on one channel must be FIFO-representable (a later onset
/// never ends strictly before an earlier one), otherwise re-parsing pairs the
/// note-offs differently.
std::vector<std::uint8_t> write_smf(const NoteSequence& seq);

NoteSequence read_midi_file(const std::string& path);
void write_midi_file(const std::string& path, const NoteSequence& seq);

double ticks_to_seconds(const NoteSequence& seq, std::int64_t tick);

/// Rescales every tick value by target/ppq with round-half-up; durations
/// never drop below one tick.
NoteSequence resample_grid(const NoteSequence& seq, int target_ticks_per_beat = 96);

}  // namespace s2a
