#include <doctest.h>

#include "s2a/error.h"
#include "s2a/tokenizer.h"
#include "support.h"

using namespace s2a;

namespace {

std::vector<int> column(const std::vector<TokenTuple>& t, Feature f) {
  std::vector<int> out;
  for (const auto& x : t) out.push_back(x[f]);
  return out;
}

NoteSequence decode(const std::vector<TokenTuple>& t, const NoteSequence& like) {
  return detokenize(column(t, Feature::kPitch), column(t, Feature::kVelocity), column(t, Feature::kIoi),
                    column(t, Feature::kDuration), like.time_signatures, like.tempi.front().microseconds_per_quarter);
}

}  // namespace

TEST_CASE("vocabulary sizes") {
  const VocabSpec v;
  CHECK(v.sizes() == std::array<int, kNumFeatures>{92, 68, 1156, 772, 388, 3004});
  CHECK(v.size(Feature::kIoi) == 772);
  CHECK(v.size(Feature::kBar) == 3004);
}

TEST_CASE("extreme values land on the table edges") {
  NoteSequence s;
  s.ppq = 96;
  s.time_signatures = {{0, 3, 2}};  // 288-tick bars
  s.notes = {{0, 1, 21, 1, 0}, {300, 1152, 108, 127, 0}};
  const auto t = tokenize(s, false);
  REQUIRE(t.size() == 2);
  CHECK(t[0] == TokenTuple{4, 4, 4, 4, 4, 4});
  CHECK(t[1] == TokenTuple{91, 67, 1155, 304, 16, 5});
}

TEST_CASE("score tokens use the fixed velocity") {
  NoteSequence s;
  s.ppq = 96;
  s.notes = {{0, 96, 60, 100, 0}};
  CHECK(tokenize(s, true)[0].velocity == 4 + 30);
  CHECK(tokenize(s, false)[0].velocity == 4 + 50);
}

TEST_CASE("bars follow time signature changes") {
  NoteSequence s;
  s.ppq = 96;
  s.time_signatures = {{0, 4, 2}, {400, 3, 2}};
  s.notes = {{350, 10, 60, 64, 0}, {400, 10, 60, 64, 0}, {700, 10, 60, 64, 0}};
  const auto t = tokenize(s, false);
  // 400 ticks of 4/4 open a second, partial bar; 3/4 starts bar 2.
  CHECK(t[0].bar == 4 + 0);
  CHECK(t[0].position == 4 + 350);
  CHECK(t[1].bar == 4 + 2);
  CHECK(t[1].position == 4 + 0);
  CHECK(t[2].bar == 4 + 3);
  CHECK(t[2].position == 4 + 12);
}

TEST_CASE("out-of-table values are clamped") {
  NoteSequence s;
  s.ppq = 96;
  s.notes = {{0, 5000, 60, 64, 0}, {2000, 10, 60, 64, 0}};
  const auto t = tokenize(s, false);
  CHECK(t[0].duration == 1155);
  CHECK(t[1].ioi == 771);
}

TEST_CASE("pitch outside the piano is rejected with its index") {
  NoteSequence s;
  s.ppq = 96;
  s.notes = {{0, 10, 60, 64, 0}, {10, 10, 20, 64, 0}};
  CHECK_THROWS_WITH_AS(tokenize(s, false), doctest::Contains("note 1"), DataError);
}

TEST_CASE("grid sequences survive tokenize and detokenize") {
  Rng rng(2024);
  for (int k = 0; k < 200; ++k) {
    const NoteSequence s = testing::random_grid_sequence(rng, testing::uniform_int(rng, 1, 80));
    const auto t = tokenize(s, false);
    const NoteSequence back = decode(t, s);
    REQUIRE(back.notes == s.notes);
    REQUIRE(tokenize(back, false) == t);
  }
}

TEST_CASE("detokenize rejects special tokens") {
  CHECK_THROWS_AS(detokenize({kPad}, {10}, {10}, {10}, {TimeSignatureEvent{}}), DataError);
  CHECK_THROWS_AS(detokenize({10}, {10}, {10}, {10, 11}, {TimeSignatureEvent{}}), DataError);
}

TEST_CASE("segmentation pads the tail") {
  std::vector<TokenTuple> t(300, TokenTuple{5, 5, 5, 5, 5, 5});
  const auto segs = segment(t, 2);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].valid_length() == 256);
  CHECK(segs[1].valid_length() == 44);
  CHECK(segs[1].source_offset == 256);
  CHECK(segs[1].performer_id == 2);
  CHECK(segs[1].tuples[44] == TokenTuple{});
  CHECK(segs[1].pad_mask[44]);
  CHECK(segment({}, 0).empty());
}

TEST_CASE("token dump round trip") {
  const std::vector<TokenTuple> t{{4, 5, 6, 7, 8, 9}, {91, 67, 1155, 771, 387, 3003}};
  CHECK(parse_token_dump(format_token_dump(t)) == t);
  CHECK_THROWS_AS(parse_token_dump("nonsense"), DataError);
}
