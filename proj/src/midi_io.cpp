#include "s2a/midi_io.h"

#include <algorithm>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <tuple>

#include "s2a/error.h"

namespace s2a {

bool canonical_less(const NoteEvent& a, const NoteEvent& b) {
  return std::tie(a.onset_ticks, a.pitch, a.channel, a.duration_ticks, a.velocity) <
         std::tie(b.onset_ticks, b.pitch, b.channel, b.duration_ticks, b.velocity);
}

std::int64_t TimeSignatureEvent::bar_ticks(int ppq) const {
  // numerator beats of (4 / 2^denominator_log2) quarters each
  return static_cast<std::int64_t>(numerator) * ppq * 4 / (std::int64_t{1} << denominator_log2);
}

namespace {

template <typename Event>
void sort_unique_by_tick(std::vector<Event>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.tick < b.tick; });
  std::vector<Event> out;
  for (const auto& e : events) {
    if (!out.empty() && out.back().tick == e.tick) {
      out.back() = e;
    } else {
      out.push_back(e);
    }
  }
  events = std::move(out);
}

}  // namespace

void NoteSequence::normalize() {
  std::sort(notes.begin(), notes.end(), canonical_less);
  sort_unique_by_tick(tempi);
  sort_unique_by_tick(time_signatures);
  if (time_signatures.empty() || time_signatures.front().tick != 0) {
    time_signatures.insert(time_signatures.begin(), TimeSignatureEvent{});
  }
  std::stable_sort(sustain_events.begin(), sustain_events.end(),
                   [](const SustainEvent& a, const SustainEvent& b) { return a.tick < b.tick; });
}

void NoteSequence::validate() const {
  if (ppq <= 0) throw DataError("ppq must be positive");
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const auto& n = notes[i];
    const std::string where = "note " + std::to_string(i) + ": ";
    if (n.onset_ticks < 0) throw DataError(where + "negative onset");
    if (n.duration_ticks < 1) throw DataError(where + "duration below one tick");
    if (n.pitch < 0 || n.pitch > 127) throw DataError(where + "pitch out of range");
    if (n.velocity < 1 || n.velocity > 127) throw DataError(where + "velocity out of range");
    if (n.channel < 0 || n.channel > 15) throw DataError(where + "channel out of range");
    if (i > 0 && canonical_less(n, notes[i - 1])) throw DataError(where + "notes not in canonical order");
  }
  for (std::size_t i = 0; i < tempi.size(); ++i) {
    if (tempi[i].microseconds_per_quarter <= 0) throw DataError("non-positive tempo");
    if (i > 0 && tempi[i].tick <= tempi[i - 1].tick) throw DataError("tempo events not strictly sorted");
  }
  for (std::size_t i = 0; i < time_signatures.size(); ++i) {
    const auto& ts = time_signatures[i];
    if (ts.numerator < 1 || ts.denominator_log2 < 0 || ts.denominator_log2 > 6) {
      throw DataError("invalid time signature");
    }
    if (i > 0 && ts.tick <= time_signatures[i - 1].tick) {
      throw DataError("time signatures not strictly sorted");
    }
  }
}

std::int64_t NoteSequence::end_tick() const {
  std::int64_t end = 0;
  for (const auto& n : notes) end = std::max(end, n.offset_ticks());
  return end;
}

// ---------------------------------------------------------------------------
// Reading

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::size_t pos, std::size_t end)
      : bytes_(bytes), pos_(pos), end_(end) {}

  bool at_end() const { return pos_ >= end_; }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    if (pos_ >= end_) throw MidiParseError("unexpected end of data", pos_);
    return bytes_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= end_) throw MidiParseError("unexpected end of data", pos_);
    return bytes_[pos_];
  }
  std::uint32_t u16() { return (std::uint32_t{u8()} << 8) | u8(); }
  std::uint32_t u32() { return (u16() << 16) | u16(); }

  std::uint32_t vlq() {
    const std::size_t start = pos_;
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      value = (value << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return value;
    }
    throw MidiParseError("variable-length quantity longer than 4 bytes", start);
  }

  void skip(std::size_t n) {
    if (n > end_ - pos_) throw MidiParseError("length field overruns chunk", pos_);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t end_;
};

struct RawEvent {
  std::int64_t tick;
  int track;
  std::size_t order;  // position within its track
  enum Kind { kNoteOn, kNoteOff, kSustain, kTempo, kTimeSignature, kEndOfTrack } kind;
  int channel = 0;
  int a = 0;
  int b = 0;
};

void read_track(ByteReader& r, int track, std::vector<RawEvent>& out) {
  std::int64_t tick = 0;
  std::uint8_t running = 0;
  std::size_t order = 0;
  while (!r.at_end()) {
    tick += r.vlq();
    const std::size_t event_pos = r.pos();
    std::uint8_t status = r.peek();
    if (status & 0x80) {
      r.u8();
    } else {
      if (running == 0) throw MidiParseError("data byte without running status", event_pos);
      status = running;
    }

    if (status == 0xFF) {
      const std::uint8_t type = r.u8();
      const std::uint32_t len = r.vlq();
      if (type == 0x2F) {
        r.skip(len);
        out.push_back({tick, track, order++, RawEvent::kEndOfTrack, 0, 0, 0});
        return;
      }
      if (type == 0x51) {
        if (len != 3) throw MidiParseError("tempo meta-event must have length 3", event_pos);
        const int us = static_cast<int>((std::uint32_t{r.u8()} << 16) | (std::uint32_t{r.u8()} << 8) | r.u8());
        if (us == 0) throw MidiParseError("zero tempo", event_pos);
        out.push_back({tick, track, order++, RawEvent::kTempo, 0, us, 0});
      } else if (type == 0x58) {
        if (len < 2) throw MidiParseError("time signature meta-event too short", event_pos);
        const int num = r.u8();
        const int den = r.u8();
        r.skip(len - 2);
        if (num < 1 || den > 6) throw MidiParseError("invalid time signature", event_pos);
        out.push_back({tick, track, order++, RawEvent::kTimeSignature, 0, num, den});
      } else {
        r.skip(len);
      }
      running = 0;
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      r.skip(r.vlq());
      running = 0;
      continue;
    }
    if (status >= 0xF1) throw MidiParseError("unsupported system message in file", event_pos);

    running = status;
    const int kind = status & 0xF0;
    const int channel = status & 0x0F;
    const int d1 = r.u8();
    if (d1 & 0x80) throw MidiParseError("data byte has high bit set", event_pos);
    if (kind == 0xC0 || kind == 0xD0) continue;
    const int d2 = r.u8();
    if (d2 & 0x80) throw MidiParseError("data byte has high bit set", event_pos);
    switch (kind) {
      case 0x90:
        out.push_back({tick, track, order++, d2 == 0 ? RawEvent::kNoteOff : RawEvent::kNoteOn, channel, d1, d2});
        break;
      case 0x80:
        out.push_back({tick, track, order++, RawEvent::kNoteOff, channel, d1, d2});
        break;
      case 0xB0:
        if (d1 == 64) out.push_back({tick, track, order++, RawEvent::kSustain, channel, d2, 0});
        break;
      default:
        break;  // aftertouch, pitch bend
    }
  }
  // a missing end-of-track is tolerated
}

}  // namespace

ParseResult parse_smf_with_warnings(std::span<const std::uint8_t> bytes) {
  ByteReader hdr(bytes, 0, bytes.size());
  if (bytes.size() < 14) throw MidiParseError("file too short for MThd header", bytes.size());
  if (!std::equal(bytes.begin(), bytes.begin() + 4, "MThd")) throw MidiParseError("missing MThd", 0);
  hdr.skip(4);
  const std::uint32_t hdr_len = hdr.u32();
  if (hdr_len < 6) throw MidiParseError("MThd length below 6", 4);
  const std::uint32_t format = hdr.u16();
  const std::uint32_t ntracks = hdr.u16();
  const std::uint32_t division = hdr.u16();
  if (format > 1) throw MidiParseError("only SMF format 0 and 1 are supported", 8);
  if (division & 0x8000) throw MidiParseError("SMPTE time division is not supported", 12);
  if (division == 0) throw MidiParseError("zero ticks per quarter", 12);
  hdr.skip(hdr_len - 6);

  std::vector<RawEvent> events;
  std::size_t pos = hdr.pos();
  for (std::uint32_t t = 0; t < ntracks; ++t) {
    if (bytes.size() - pos < 8) throw MidiParseError("truncated track chunk header", pos);
    ByteReader ch(bytes, pos, bytes.size());
    const bool is_track = std::equal(bytes.begin() + pos, bytes.begin() + pos + 4, "MTrk");
    ch.skip(4);
    const std::uint32_t len = ch.u32();
    if (len > bytes.size() - ch.pos()) throw MidiParseError("chunk length exceeds file size", pos + 4);
    if (is_track) {
      ByteReader tr(bytes, ch.pos(), ch.pos() + len);
      read_track(tr, static_cast<int>(t), events);
    } else {
      --t;  // alien chunk, skipped without counting as a track
    }
    pos = ch.pos() + len;
  }

  // Merge tracks by absolute tick. Within a tick, track order then file order.
  std::stable_sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
    return std::tie(a.tick, a.track, a.order) < std::tie(b.tick, b.track, b.order);
  });

  ParseResult result;
  NoteSequence& seq = result.sequence;
  seq.ppq = static_cast<int>(division);
  seq.time_signatures.clear();

  std::int64_t final_tick = 0;
  std::map<std::pair<int, int>, std::deque<std::pair<std::int64_t, int>>> open;
  for (const auto& e : events) {
    final_tick = std::max(final_tick, e.tick);
    switch (e.kind) {
      case RawEvent::kNoteOn:
        open[{e.channel, e.a}].emplace_back(e.tick, e.b);
        break;
      case RawEvent::kNoteOff: {
        auto it = open.find({e.channel, e.a});
        if (it == open.end() || it->second.empty()) {
          result.warnings.push_back("note-off without note-on at tick " + std::to_string(e.tick));
          break;
        }
        const auto [onset, vel] = it->second.front();
        it->second.pop_front();
        seq.notes.push_back({onset, std::max<std::int64_t>(1, e.tick - onset), e.a, vel, e.channel});
        break;
      }
      case RawEvent::kSustain:
        seq.sustain_events.push_back({e.tick, e.a});
        break;
      case RawEvent::kTempo:
        seq.tempi.push_back({e.tick, e.a});
        break;
      case RawEvent::kTimeSignature:
        seq.time_signatures.push_back({e.tick, e.a, e.b});
        break;
      case RawEvent::kEndOfTrack:
        break;  // only extends final_tick
    }
  }
  for (auto& [key, queue] : open) {
    for (const auto& [onset, vel] : queue) {
      result.warnings.push_back("unmatched note-on (pitch " + std::to_string(key.second) + ", tick " +
                                std::to_string(onset) + ") closed at final tick");
      seq.notes.push_back({onset, std::max<std::int64_t>(1, final_tick - onset), key.second, vel, key.first});
    }
  }
  seq.normalize();
  return result;
}

NoteSequence parse_smf(std::span<const std::uint8_t> bytes) { return parse_smf_with_warnings(bytes).sequence; }

// ---------------------------------------------------------------------------
// Writing

namespace {

constexpr std::int64_t kMaxVlq = 0x0FFFFFFF;

void put_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16(out, v >> 16);
  put_u16(out, v & 0xFFFF);
}

void put_vlq(std::vector<std::uint8_t>& out, std::int64_t value) {
  if (value < 0 || value > kMaxVlq) throw DataError("tick delta does not fit a 32-bit variable-length quantity");
  std::uint8_t buf[4];
  int n = 0;
  auto v = static_cast<std::uint32_t>(value);
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

struct OutEvent {
  std::int64_t tick;
  int priority;  // lower first within a tick
  std::size_t order;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_track(std::vector<OutEvent> events) {
  std::stable_sort(events.begin(), events.end(), [](const OutEvent& a, const OutEvent& b) {
    return std::tie(a.tick, a.priority, a.order) < std::tie(b.tick, b.priority, b.order);
  });
  std::vector<std::uint8_t> body;
  std::int64_t last = 0;
  for (const auto& e : events) {
    put_vlq(body, e.tick - last);
    last = e.tick;
    body.insert(body.end(), e.payload.begin(), e.payload.end());
  }
  put_vlq(body, 0);
  body.insert(body.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> chunk{'M', 'T', 'r', 'k'};
  put_u32(chunk, static_cast<std::uint32_t>(body.size()));
  chunk.insert(chunk.end(), body.begin(), body.end());
  return chunk;
}

}  // namespace

std::vector<std::uint8_t> write_smf(const NoteSequence& seq) {
  seq.validate();
  if (seq.ppq > 0x7FFF) throw DataError("ppq does not fit the SMF division field");

  std::vector<OutEvent> conductor;
  std::size_t order = 0;
  for (const auto& t : seq.tempi) {
    if (t.microseconds_per_quarter > 0xFFFFFF) throw DataError("tempo exceeds 24 bits");
    const auto us = static_cast<std::uint32_t>(t.microseconds_per_quarter);
    conductor.push_back({t.tick, 0, order++,
                         {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(us >> 16),
                          static_cast<std::uint8_t>(us >> 8), static_cast<std::uint8_t>(us)}});
  }
  for (const auto& ts : seq.time_signatures) {
    conductor.push_back({ts.tick, 1, order++,
                         {0xFF, 0x58, 0x04, static_cast<std::uint8_t>(ts.numerator),
                          static_cast<std::uint8_t>(ts.denominator_log2), 24, 8}});
  }

  // Note-offs precede note-ons at the same tick so abutting same-pitch notes
  // re-parse with their original durations.
  std::vector<OutEvent> notes;
  order = 0;
  for (const auto& s : seq.sustain_events) {
    notes.push_back({s.tick, 1, order++, {0xB0, 64, static_cast<std::uint8_t>(s.value)}});
  }
  for (const auto& n : seq.notes) {
    const auto ch = static_cast<std::uint8_t>(n.channel);
    const auto p = static_cast<std::uint8_t>(n.pitch);
    notes.push_back({n.onset_ticks, 2, order++, {static_cast<std::uint8_t>(0x90 | ch), p,
                                                 static_cast<std::uint8_t>(n.velocity)}});
    notes.push_back({n.offset_ticks(), 0, order++, {static_cast<std::uint8_t>(0x80 | ch), p, 64}});
  }

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_u32(out, 6);
  put_u16(out, 1);
  put_u16(out, 2);
  put_u16(out, static_cast<std::uint32_t>(seq.ppq));
  const auto t0 = encode_track(std::move(conductor));
  const auto t1 = encode_track(std::move(notes));
  out.insert(out.end(), t0.begin(), t0.end());
  out.insert(out.end(), t1.begin(), t1.end());
  return out;
}

NoteSequence read_midi_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_smf(bytes);
}

void write_midi_file(const std::string& path, const NoteSequence& seq) {
  const auto bytes = write_smf(seq);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Timing

double ticks_to_seconds(const NoteSequence& seq, std::int64_t tick) {
  double seconds = 0.0;
  std::int64_t span_start = 0;
  int tempo = kDefaultTempo;
  for (const auto& t : seq.tempi) {
    if (t.tick >= tick) break;
    seconds += static_cast<double>(t.tick - span_start) / seq.ppq * (tempo / 1e6);
    span_start = t.tick;
    tempo = t.microseconds_per_quarter;
  }
  return seconds + static_cast<double>(tick - span_start) / seq.ppq * (tempo / 1e6);
}

namespace {

std::int64_t rescale(std::int64_t ticks, int from, int to) {
  // round-half-up of ticks * to / from
  return (2 * ticks * to + from) / (2 * static_cast<std::int64_t>(from));
}

}  // namespace

NoteSequence resample_grid(const NoteSequence& seq, int target_ticks_per_beat) {
  if (target_ticks_per_beat <= 0) throw DataError("target ticks per beat must be positive");
  const int from = seq.ppq;
  const int to = target_ticks_per_beat;
  NoteSequence out = seq;
  out.ppq = to;
  for (auto& n : out.notes) {
    n.onset_ticks = rescale(n.onset_ticks, from, to);
    n.duration_ticks = std::max<std::int64_t>(1, rescale(n.duration_ticks, from, to));
  }
  for (auto& t : out.tempi) t.tick = rescale(t.tick, from, to);
  for (auto& ts : out.time_signatures) ts.tick = rescale(ts.tick, from, to);
  for (auto& s : out.sustain_events) s.tick = rescale(s.tick, from, to);
  out.normalize();
  return out;
}

}  // namespace s2a
