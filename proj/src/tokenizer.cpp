#include "s2a/tokenizer.h"

#include <algorithm>
#include <sstream>

#include "s2a/error.h"

namespace s2a {

VocabSpec::VocabSpec() {
  constexpr std::array<int, kNumFeatures> expected{92, 68, 1156, 772, 388, 3004};
  for (int f = 0; f < kNumFeatures; ++f) {
    if (value_tokens[f] + kNumSpecials != expected[f]) throw Error("vocabulary layout does not match the table sizes");
  }
}

std::array<int, kNumFeatures> VocabSpec::sizes() const {
  std::array<int, kNumFeatures> out{};
  for (int f = 0; f < kNumFeatures; ++f) out[f] = value_tokens[f] + kNumSpecials;
  return out;
}

const char* feature_name(Feature f) {
  switch (f) {
    case Feature::kPitch: return "pitch";
    case Feature::kVelocity: return "velocity";
    case Feature::kDuration: return "duration";
    case Feature::kIoi: return "ioi";
    case Feature::kPosition: return "position";
    case Feature::kBar: return "bar";
  }
  return "?";
}

int TokenTuple::operator[](Feature f) const { return const_cast<TokenTuple&>(*this)[f]; }

int& TokenTuple::operator[](Feature f) {
  switch (f) {
    case Feature::kPitch: return pitch;
    case Feature::kVelocity: return velocity;
    case Feature::kDuration: return duration;
    case Feature::kIoi: return ioi;
    case Feature::kPosition: return position;
    case Feature::kBar: return bar;
  }
  return pitch;
}

int TokenSegment::valid_length() const {
  return static_cast<int>(std::count(pad_mask.begin(), pad_mask.end(), false));
}

std::vector<TokenTuple> tokenize(const NoteSequence& seq, bool is_score) {
  const VocabSpec vocab;
  std::vector<TimeSignatureEvent> sigs = seq.time_signatures;
  if (sigs.empty() || sigs.front().tick != 0) sigs.insert(sigs.begin(), TimeSignatureEvent{});

  std::vector<TokenTuple> out;
  out.reserve(seq.notes.size());
  std::size_t sig = 0;
  std::int64_t sig_bar0 = 0;  // bar index at the start of the current signature
  std::int64_t prev_onset = 0;
  for (std::size_t i = 0; i < seq.notes.size(); ++i) {
    const NoteEvent& n = seq.notes[i];
    if (n.pitch < kLowestPianoKey || n.pitch > kHighestPianoKey) {
      throw DataError("note " + std::to_string(i) + ": pitch " + std::to_string(n.pitch) +
                      " outside the piano range 21-108");
    }
    while (sig + 1 < sigs.size() && sigs[sig + 1].tick <= n.onset_ticks) {
      const std::int64_t len = sigs[sig].bar_ticks(seq.ppq);
      const std::int64_t span = sigs[sig + 1].tick - sigs[sig].tick;
      sig_bar0 += (span + len - 1) / len;
      ++sig;
    }
    const std::int64_t bar_len = sigs[sig].bar_ticks(seq.ppq);
    const std::int64_t since = n.onset_ticks - sigs[sig].tick;
    const std::int64_t bar = sig_bar0 + since / bar_len;
    const std::int64_t position = since % bar_len;

    const int velocity = is_score ? kScoreVelocity : n.velocity;
    const std::int64_t ioi = i == 0 ? 0 : n.onset_ticks - prev_onset;
    prev_onset = n.onset_ticks;

    TokenTuple t;
    t.pitch = kNumSpecials + (n.pitch - kLowestPianoKey);
    t.velocity = kNumSpecials + velocity / 2;
    t.duration = kNumSpecials + static_cast<int>(std::clamp<std::int64_t>(n.duration_ticks, 1, vocab.values(Feature::kDuration))) - 1;
    t.ioi = kNumSpecials + static_cast<int>(std::clamp<std::int64_t>(ioi, 0, vocab.values(Feature::kIoi) - 1));
    t.position = kNumSpecials + static_cast<int>(std::clamp<std::int64_t>(position, 0, vocab.values(Feature::kPosition) - 1));
    t.bar = kNumSpecials + static_cast<int>(std::clamp<std::int64_t>(bar, 0, vocab.values(Feature::kBar) - 1));
    out.push_back(t);
  }
  return out;
}

namespace {

void check_value_token(int tok, int vocab_size, const char* what, std::size_t pos) {
  if (tok < kNumSpecials || tok >= vocab_size) {
    throw DataError(std::string(what) + " token " + std::to_string(tok) + " at position " + std::to_string(pos) +
                    " is not a value token");
  }
}

}  // namespace

NoteSequence detokenize(const std::vector<int>& pitch_toks, const std::vector<int>& velocity_toks,
                        const std::vector<int>& ioi_toks, const std::vector<int>& duration_toks,
                        const std::vector<TimeSignatureEvent>& time_signatures, int microseconds_per_quarter) {
  const std::size_t n = pitch_toks.size();
  if (velocity_toks.size() != n || ioi_toks.size() != n || duration_toks.size() != n) {
    throw DataError("detokenize: token lists differ in length");
  }
  const VocabSpec vocab;
  NoteSequence seq;
  seq.ppq = kBeatResolution;
  seq.tempi = {TempoEvent{0, microseconds_per_quarter}};
  seq.time_signatures = time_signatures;
  seq.notes.reserve(n);
  std::int64_t onset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    check_value_token(pitch_toks[i], vocab.size(Feature::kPitch), "pitch", i);
    check_value_token(velocity_toks[i], vocab.size(Feature::kVelocity), "velocity", i);
    check_value_token(ioi_toks[i], vocab.size(Feature::kIoi), "ioi", i);
    check_value_token(duration_toks[i], vocab.size(Feature::kDuration), "duration", i);
    if (i > 0) onset += ioi_toks[i] - kNumSpecials;
    NoteEvent note;
    note.onset_ticks = onset;
    note.duration_ticks = duration_toks[i] - kNumSpecials + 1;
    note.velocity = std::clamp((velocity_toks[i] - kNumSpecials) * 2 + 1, 1, 127);
    note.pitch = pitch_toks[i] - kNumSpecials + kLowestPianoKey;
    seq.notes.push_back(note);
  }
  seq.normalize();
  return seq;
}

std::vector<TokenSegment> segment(const std::vector<TokenTuple>& tuples, int performer_id, int length) {
  if (length <= 0) throw DataError("segment length must be positive");
  std::vector<TokenSegment> out;
  for (std::size_t start = 0; start < tuples.size(); start += static_cast<std::size_t>(length)) {
    TokenSegment seg;
    seg.performer_id = performer_id;
    seg.source_offset = static_cast<int>(start);
    seg.tuples.assign(static_cast<std::size_t>(length), TokenTuple{});
    seg.pad_mask.assign(static_cast<std::size_t>(length), true);
    const std::size_t count = std::min(tuples.size() - start, static_cast<std::size_t>(length));
    for (std::size_t k = 0; k < count; ++k) {
      seg.tuples[k] = tuples[start + k];
      seg.pad_mask[k] = false;
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::string format_token_dump(const std::vector<TokenTuple>& tuples) {
  std::ostringstream os;
  os << "pitch\tvelocity\tduration\tioi\tposition\tbar\n";
  for (const auto& t : tuples) {
    os << t.pitch << '\t' << t.velocity << '\t' << t.duration << '\t' << t.ioi << '\t' << t.position << '\t' << t.bar
       << '\n';
  }
  return os.str();
}

std::vector<TokenTuple> parse_token_dump(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("pitch\t", 0) != 0) throw DataError("token dump: missing header");
  std::vector<TokenTuple> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenTuple t;
    if (!(ls >> t.pitch >> t.velocity >> t.duration >> t.ioi >> t.position >> t.bar)) {
      throw DataError("token dump: malformed line " + std::to_string(out.size() + 2));
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace s2a
