#include "s2a/align.h"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "s2a/error.h"

namespace s2a {

namespace {

double onset_beats(const NoteSequence& seq, std::size_t i) {
  return static_cast<double>(seq.notes[i].onset_ticks) / seq.ppq;
}

struct Cell {
  int matches = 0;
  double cost = 0.0;
  enum Move : unsigned char { kNone, kDiag, kSkipScore, kSkipPerf } move = kNone;
};

// Lexicographic: more matches, then lower cost. Exact cost ties keep the
// incumbent, which makes the move preference diagonal > skip-score > skip-perf.
bool better(int matches, double cost, const Cell& incumbent) {
  if (matches != incumbent.matches) return matches > incumbent.matches;
  return cost < incumbent.cost;
}

}  // namespace

AlignmentMap align_notes(const NoteSequence& score, const NoteSequence& perf, double gap_penalty) {
  if (gap_penalty < 0.0) throw DataError("gap penalty must be non-negative");
  const std::size_t n = score.notes.size();
  const std::size_t m = perf.notes.size();

  AlignmentMap map;
  if (n == 0 || m == 0) {
    for (std::size_t i = 0; i < n; ++i) map.unmatched_score.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < m; ++j) map.unmatched_perf.push_back(static_cast<int>(j));
    return map;
  }

  std::vector<Cell> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 1; i <= n; ++i) at(i, 0).move = Cell::kSkipScore;
  for (std::size_t j = 1; j <= m; ++j) at(0, j).move = Cell::kSkipPerf;

  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      Cell& c = at(i, j);
      bool have = false;
      if (score.notes[i - 1].pitch == perf.notes[j - 1].pitch) {
        const Cell& d = at(i - 1, j - 1);
        c.matches = d.matches + 1;
        c.cost = d.cost + std::abs(onset_beats(score, i - 1) - onset_beats(perf, j - 1));
        c.move = Cell::kDiag;
        have = true;
      }
      const Cell& up = at(i - 1, j);
      if (!have || better(up.matches, up.cost, c)) {
        c.matches = up.matches;
        c.cost = up.cost;
        c.move = Cell::kSkipScore;
        have = true;
      }
      const Cell& left = at(i, j - 1);
      if (better(left.matches, left.cost, c)) {
        c.matches = left.matches;
        c.cost = left.cost;
        c.move = Cell::kSkipPerf;
      }
    }
  }

  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    switch (at(i, j).move) {
      case Cell::kDiag:
        --i;
        --j;
        map.pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        break;
      case Cell::kSkipScore:
        --i;
        map.unmatched_score.push_back(static_cast<int>(i));
        break;
      case Cell::kSkipPerf:
        --j;
        map.unmatched_perf.push_back(static_cast<int>(j));
        break;
      case Cell::kNone:
        throw Error("alignment traceback reached an unset cell");
    }
  }
  std::reverse(map.pairs.begin(), map.pairs.end());
  std::reverse(map.unmatched_score.begin(), map.unmatched_score.end());
  std::reverse(map.unmatched_perf.begin(), map.unmatched_perf.end());
  return map;
}

double alignment_score(const AlignmentMap& map, std::size_t n_score, std::size_t n_perf, double gap_penalty) {
  const double matches = static_cast<double>(map.pairs.size());
  const double gaps = static_cast<double>(n_score + n_perf) - 2.0 * matches;
  return matches - gap_penalty * gaps;
}

double alignment_onset_cost(const AlignmentMap& map, const NoteSequence& score, const NoteSequence& perf) {
  double cost = 0.0;
  for (const auto& [i, j] : map.pairs) {
    cost += std::abs(onset_beats(score, static_cast<std::size_t>(i)) - onset_beats(perf, static_cast<std::size_t>(j)));
  }
  return cost;
}

std::string alignment_to_json(const AlignmentMap& map) {
  nlohmann::json j;
  j["pairs"] = nlohmann::json::array();
  for (const auto& [a, b] : map.pairs) j["pairs"].push_back({a, b});
  j["unmatched_score"] = map.unmatched_score;
  j["unmatched_perf"] = map.unmatched_perf;
  return j.dump();
}

AlignmentMap alignment_from_json(const std::string& text) {
  AlignmentMap map;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& p : j.at("pairs")) map.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    map.unmatched_score = j.at("unmatched_score").get<std::vector<int>>();
    map.unmatched_perf = j.at("unmatched_perf").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid alignment JSON: ") + e.what());
  }
  return map;
}

}  // namespace s2a
