#include "s2a/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "s2a/align.h"
#include "s2a/error.h"
#include "s2a/m2m_model.h"
#include "s2a/tokenizer.h"

namespace fs = std::filesystem;

namespace s2a {

PerformerProfile default_profile(int performer) {
  // A small fixed palette so different ids are clearly distinguishable.
  static const PerformerProfile kPalette[] = {
      {64, 24.0, 0.3, 0.15, 0.9},
      {50, 14.0, -0.2, -0.10, 0.5},
      {74, 30.0, 0.0, 0.25, 1.2},
      {58, 8.0, 0.5, 0.05, 0.7},
  };
  PerformerProfile p = kPalette[performer % 4];
  p.base_velocity -= 4 * (performer / 4);
  return p;
}

PerformerProfile SyntheticCorpusSpec::profile(int performer) const {
  if (static_cast<std::size_t>(performer) < profiles.size()) return profiles[static_cast<std::size_t>(performer)];
  return default_profile(performer);
}

NoteSequence generate_score(std::uint64_t seed, int n_notes) {
  Rng rng(seed);
  NoteSequence s;
  s.ppq = kBeatResolution;
  s.tempi = {TempoEvent{0, kDefaultTempo}};
  s.time_signatures = {TimeSignatureEvent{0, 4, 2}};
  static constexpr int kIois[] = {48, 96, 96, 144, 192};
  static constexpr int kDurations[] = {48, 96, 144, 192};
  int pitch = 60;
  std::int64_t onset = 0;
  while (static_cast<int>(s.notes.size()) < n_notes) {
    pitch = std::clamp(pitch + static_cast<int>(rng.below(9)) - 4, 33, 96);
    const int group = rng.uniform() < 0.25 ? 2 + static_cast<int>(rng.below(2)) : 1;
    const int duration = kDurations[rng.below(4)];
    for (int k = 0; k < group && static_cast<int>(s.notes.size()) < n_notes; ++k) {
      // chord tones stack downward in thirds/fourths/fifths
      const int p = std::clamp(pitch - k * (3 + static_cast<int>(rng.below(5))), kLowestPianoKey, kHighestPianoKey);
      const bool taken = std::any_of(s.notes.end() - std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(s.notes.size())),
                                     s.notes.end(), [&](const NoteEvent& n) { return n.pitch == p; });
      if (taken) continue;
      s.notes.push_back({onset, duration, p, kScoreVelocity, 0});
    }
    onset += kIois[rng.below(5)];
  }
  s.normalize();
  return s;
}

namespace {

double phrase_phase(std::int64_t onset) {
  return static_cast<double>(onset % kPhraseTicks) / static_cast<double>(kPhraseTicks);
}

}  // namespace

NoteSequence perform(const NoteSequence& score, const PerformerProfile& profile) {
  NoteSequence perf = score;
  std::int64_t onset = 0;
  for (std::size_t i = 0; i < score.notes.size(); ++i) {
    const NoteEvent& n = score.notes[i];
    NoteEvent& out = perf.notes[i];
    const double phase = phrase_phase(n.onset_ticks);
    const double vel = profile.base_velocity + profile.velocity_arch_depth * std::sin(std::numbers::pi * phase) +
                       profile.pitch_tilt * (n.pitch - 60);
    out.velocity = std::clamp(static_cast<int>(std::lround(vel)), 1, 127);
    if (i > 0) {
      const std::int64_t ioi = n.onset_ticks - score.notes[i - 1].onset_ticks;
      const double stretch = 1.0 + profile.rubato_amplitude * std::sin(2.0 * std::numbers::pi * phase);
      onset += std::lround(static_cast<double>(ioi) * stretch);
    } else {
      onset = n.onset_ticks;
    }
    out.onset_ticks = onset;
    out.duration_ticks = std::max<std::int64_t>(1, std::lround(static_cast<double>(n.duration_ticks) * profile.articulation_ratio));
  }
  // Order is preserved: IOIs stay non-negative and chords keep equal onsets.
  return perf;
}

std::vector<std::string> assign_splits(int n_items) {
  std::vector<std::string> out(static_cast<std::size_t>(std::max(0, n_items)), "train");
  if (n_items < 2) return out;
  const int n_test = std::max(1, n_items / 10);
  const int n_valid = n_items / 10;
  for (int i = 0; i < n_test; ++i) out[static_cast<std::size_t>(n_items - 1 - i)] = "test";
  for (int i = 0; i < n_valid; ++i) out[static_cast<std::size_t>(n_items - 1 - n_test - i)] = "valid";
  return out;
}

namespace {

std::string piece_name(int i) {
  std::ostringstream os;
  os << "piece_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

nlohmann::json profile_json(const PerformerProfile& p) {
  return {{"base_velocity", p.base_velocity},
          {"velocity_arch_depth", p.velocity_arch_depth},
          {"pitch_tilt", p.pitch_tilt},
          {"rubato_amplitude", p.rubato_amplitude},
          {"articulation_ratio", p.articulation_ratio}};
}

}  // namespace

std::vector<CorpusEntry> write_corpus(const SyntheticCorpusSpec& spec, const std::string& root) {
  if (spec.n_pieces < 0 || spec.notes_per_piece <= 0 || spec.n_performers <= 0) {
    throw DataError("corpus spec: counts must be positive");
  }
  std::vector<CorpusEntry> entries;
  if (spec.n_pieces == 0) return entries;

  const fs::path base(root);
  std::error_code ec;
  for (const char* sub : {"scores", "performances", "alignments"}) {
    fs::create_directories(base / sub, ec);
    if (ec) throw DataError("cannot create " + (base / sub).string() + ": " + ec.message());
  }

  for (int p = 0; p < spec.n_performers; ++p) {
    const auto splits = assign_splits(spec.n_pieces);
    for (int k = 0; k < spec.n_pieces; ++k) {
      // rotate so each performer holds out different pieces
      const int i = (k + p) % spec.n_pieces;
      CorpusEntry e;
      e.piece = piece_name(i);
      e.performer = p;
      e.score = "scores/" + e.piece + ".mid";
      e.performance = "performances/p" + std::to_string(p) + "_" + e.piece + ".mid";
      e.alignment = "alignments/p" + std::to_string(p) + "_" + e.piece + ".json";
      e.split = splits[static_cast<std::size_t>(k)];
      entries.push_back(e);
    }
  }
  std::sort(entries.begin(), entries.end(), [](const CorpusEntry& a, const CorpusEntry& b) {
    return std::tie(a.performer, a.piece) < std::tie(b.performer, b.piece);
  });

  for (int i = 0; i < spec.n_pieces; ++i) {
    const NoteSequence score = generate_score(spec.seed * 1000003ULL + static_cast<std::uint64_t>(i), spec.notes_per_piece);
    write_midi_file((base / "scores" / (piece_name(i) + ".mid")).string(), score);
    for (int p = 0; p < spec.n_performers; ++p) {
      const NoteSequence perf = perform(score, spec.profile(p));
      const std::string stem = "p" + std::to_string(p) + "_" + piece_name(i);
      write_midi_file((base / "performances" / (stem + ".mid")).string(), perf);
      AlignmentMap identity;
      for (int n = 0; n < static_cast<int>(score.notes.size()); ++n) identity.pairs.emplace_back(n, n);
      write_text(base / "alignments" / (stem + ".json"), alignment_to_json(identity) + "\n");
    }
  }

  nlohmann::json manifest;
  manifest["seed"] = spec.seed;
  manifest["n_pieces"] = spec.n_pieces;
  manifest["notes_per_piece"] = spec.notes_per_piece;
  manifest["n_performers"] = spec.n_performers;
  manifest["profiles"] = nlohmann::json::array();
  for (int p = 0; p < spec.n_performers; ++p) manifest["profiles"].push_back(profile_json(spec.profile(p)));
  manifest["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    manifest["entries"].push_back({{"piece", e.piece},
                                   {"performer", e.performer},
                                   {"score", e.score},
                                   {"performance", e.performance},
                                   {"alignment", e.alignment},
                                   {"split", e.split}});
  }
  write_text(base / "manifest.json", manifest.dump(2) + "\n");
  return entries;
}

std::vector<CorpusEntry> read_manifest(const std::string& root) {
  std::ifstream in(fs::path(root) / "manifest.json");
  if (!in) throw DataError("cannot open manifest.json under " + root);
  std::vector<CorpusEntry> entries;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.at("entries")) {
      entries.push_back({e.at("piece"), e.at("performer"), e.at("score"), e.at("performance"), e.at("alignment"),
                         e.at("split")});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid manifest: ") + e.what());
  }
  return entries;
}

}  // namespace s2a
