#include <doctest.h>

#include <json.hpp>

#include "s2a/error.h"
#include "s2a/metrics.h"
#include "support.h"

using namespace s2a;
using testing::feature_seq;

TEST_CASE("kld of a sequence with itself is zero") {
  Rng rng(1);
  std::vector<int> v;
  for (int i = 0; i < 300; ++i) v.push_back(testing::uniform_int(rng, 4, 67));
  CHECK(kld(feature_seq(v), feature_seq(v)) < 1e-9);
}

TEST_CASE("kld hand example") {
  // target histogram {1/2, 1/2, 0, ...}, prediction {1, 0, ...} over 64 bins
  const auto pred = feature_seq({4, 4}), target = feature_seq({4, 5});
  CHECK(kld(pred, target) == doctest::Approx(6.214224317283332).epsilon(1e-12));
  CHECK(kld(pred, target, KldDirection::kPredictionFromTarget) != doctest::Approx(kld(pred, target)));
  CHECK_THROWS_AS(kld(feature_seq({2}), target), DataError);
  CHECK_THROWS_AS(kld(feature_seq({}), target), DataError);
}

TEST_CASE("pearson agrees with the two-pass formula") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = testing::uniform_int(rng, 2, 400);
    std::vector<double> x, y;
    for (int i = 0; i < n; ++i) {
      x.push_back(rng.uniform(-5, 5) + 1e3 * (trial % 3));
      y.push_back(0.3 * x.back() + rng.uniform(-1, 1));
    }
    if (x == y) continue;
    CHECK(std::abs(pearson(x, y) - testing::two_pass_pearson(x, y)) < 1e-9);
  }
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK_THROWS_WITH_AS(pearson({1, 1, 1}, {1, 2, 3}), "undefined correlation", DataError);
  CHECK_FALSE(try_pearson(feature_seq({5, 5}), feature_seq({5, 6})).has_value());
}

TEST_CASE("dtwd equals the exhaustive minimum") {
  Rng rng(3);
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<int> x(static_cast<std::size_t>(testing::uniform_int(rng, 1, 6)));
    std::vector<int> y(static_cast<std::size_t>(testing::uniform_int(rng, 1, 6)));
    for (int& v : x) v = testing::uniform_int(rng, 4, 8);  // five-token alphabet
    for (int& v : y) v = testing::uniform_int(rng, 4, 8);
    const auto brute = testing::brute_force_dtw(x, y);
    CHECK(dtwd(feature_seq(x), feature_seq(y)) == doctest::Approx(brute.cost / brute.length / 68.0).epsilon(1e-15));
  }
}

TEST_CASE("dtwd small cases") {
  CHECK(dtwd(feature_seq({4, 5, 6}), feature_seq({4, 5, 6})) == 0.0);
  // one diagonal step of cost 2
  CHECK(dtwd(feature_seq({4}), feature_seq({6})) == doctest::Approx(2.0 / 68.0));
  // {4,6} vs {4}: path (0,0),(1,0), cost 2, length 2
  CHECK(dtwd(feature_seq({4, 6}), feature_seq({4})) == doctest::Approx(1.0 / 68.0));
}

TEST_CASE("aggregate") {
  const Aggregate one = aggregate({2.0});
  CHECK(one.mean == 2.0);
  CHECK_FALSE(one.ci95.has_value());
  const Aggregate a = aggregate({1.0, 2.0, 3.0, 4.0});
  CHECK(a.mean == 2.5);
  // sd = sqrt(5/3), half-width 1.96 sd / 2
  CHECK(*a.ci95 == doctest::Approx(1.96 * std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(aggregate({}).n == 0);
}

TEST_CASE("audio mse") {
  Spectrogram a, b;
  a.frame_rate = b.frame_rate = 100;
  a.frames = RealMatrix::Zero(3, 128);
  b.frames = RealMatrix::Constant(3, 128, 2.0);
  CHECK(spectrogram_mse(a, a) == 0.0);
  CHECK(spectrogram_mse(a, b) == 4.0);
  b.frame_rate = 50;
  CHECK_THROWS_AS(spectrogram_mse(a, b), DataError);
}

namespace {

NoteSequence performance(std::uint64_t seed, int n) {
  Rng rng(seed);
  NoteSequence s = testing::random_grid_sequence(rng, n);
  return s;
}

AlignmentMap identity(std::size_t n) {
  AlignmentMap m;
  for (std::size_t i = 0; i < n; ++i) m.pairs.emplace_back(static_cast<int>(i), static_cast<int>(i));
  return m;
}

}  // namespace

TEST_CASE("evaluating a performance against itself") {
  const NoteSequence p = performance(4, 600);
  const MetricReport r = evaluate_m2m({EvaluationItem{p, p, identity(p.notes.size()), "x"}});
  REQUIRE(r.performance.rows.size() == 1);
  REQUIRE(r.segment.rows.size() == 3);  // 256 + 256 + 88
  CHECK(r.segment.rows[2].name == "x#2");
  for (int h = 0; h < kNumHeads; ++h) {
    CHECK(r.performance.features[h].kld.mean < 1e-9);
    CHECK(r.performance.features[h].correlation.mean == doctest::Approx(1.0));
    CHECK(r.performance.features[h].dtwd.mean == 0.0);
    CHECK(r.segment.features[h].dtwd.n == 3);
  }
}

TEST_CASE("undefined correlations are reported as missing") {
  NoteSequence a = performance(5, 20), b = a;
  for (auto& n : a.notes) n.velocity = 61;
  const MetricReport r = evaluate_m2m({EvaluationItem{a, b, identity(a.notes.size()), "flat"}});
  CHECK_FALSE(r.performance.rows[0].correlation[kVelHead].has_value());
  CHECK(r.performance.features[kVelHead].correlation.missing == 1);
  CHECK(r.performance.features[kVelHead].correlation.n == 0);

  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j.contains("performance_wise"));
  const std::string csv = report_to_csv(r);
  CHECK(csv.find("flat") != std::string::npos);
  CHECK_FALSE(report_summary(r).empty());
}

TEST_CASE("items without matches are skipped") {
  const NoteSequence a = performance(6, 10);
  const MetricReport r = evaluate_m2m({EvaluationItem{a, a, AlignmentMap{}, "none"}});
  CHECK(r.performance.rows.empty());
  AlignmentMap bad;
  bad.pairs = {{0, 50}};
  CHECK_THROWS_AS(evaluate_m2m({EvaluationItem{a, a, bad, "bad"}}), DataError);
}
