#include <doctest.h>

#include <cmath>

#include "s2a/corpus.h"
#include "s2a/error.h"
#include "s2a/pipeline.h"
#include "s2a/trainer.h"
#include "support.h"

using namespace s2a;

namespace {

TaskWeights started(TaskLosses initial) {
  TaskWeights w;
  w.initial_losses = initial;
  w.initialized = true;
  return w;
}

std::vector<TrainingPair> tiny_dataset(int n_pieces, int notes) {
  std::vector<TrainingPair> out;
  for (int i = 0; i < n_pieces; ++i) {
    const NoteSequence score = generate_score(static_cast<std::uint64_t>(i), notes);
    const NoteSequence perf = perform(score, default_profile(i % 2));
    AlignmentMap identity;
    for (int k = 0; k < notes; ++k) identity.pairs.emplace_back(k, k);
    for (auto& p : make_training_pairs(score, perf, identity, i % 2)) out.push_back(std::move(p));
  }
  return out;
}

M2MConfig tiny_model() {
  M2MConfig c;
  c.n_layers = 1;
  c.d_model = 32;
  c.n_heads = 2;
  c.d_ff = 64;
  c.n_performers = 2;
  c.dropout = 0.1;
  return c;
}

}  // namespace

TEST_CASE("gradnorm two-step example") {
  // Losses (1, 3, 2) against initial (2, 3, 4), per-task gradient norms
  // (1, 2, 3), learning rate 0.5. The third weight hits the floor on the
  // first step and recovers on the second.
  const TaskLosses losses{1.0, 3.0, 2.0};
  const std::array<double, 3> norm{1.0, 2.0, 3.0};
  TaskWeights w = started({2.0, 3.0, 4.0});
  auto weighted = [&](const TaskWeights& tw) {
    return TaskLosses{tw.w[0] * norm[0], tw.w[1] * norm[1], tw.w[2] * norm[2]};
  };
  w = gradnorm_step(w, losses, weighted(w), 0.5);
  CHECK(w.w[0] == doctest::Approx(1.2856775520699408).epsilon(1e-12));
  CHECK(w.w[1] == doctest::Approx(1.7142367360932544).epsilon(1e-12));
  CHECK(w.w[2] == doctest::Approx(8.571183680466273e-05).epsilon(1e-12));
  w = gradnorm_step(w, losses, weighted(w), 0.5);
  CHECK(w.w[0] == doctest::Approx(0.7856775520699408).epsilon(1e-12));
  CHECK(w.w[1] == doctest::Approx(0.7142367360932544).epsilon(1e-12));
  CHECK(w.w[2] == doctest::Approx(1.500085711836805).epsilon(1e-12));
}

TEST_CASE("gradnorm keeps the symmetric point") {
  TaskWeights w = started({2.0, 2.0, 2.0});
  for (int i = 0; i < 10; ++i) w = gradnorm_step(w, {1.5, 1.5, 1.5}, {0.7, 0.7, 0.7}, 0.025);
  for (double x : w.w) CHECK(std::abs(x - 1.0) < 1e-12);
}

TEST_CASE("gradnorm weights stay positive and sum to three") {
  Rng rng(3);
  TaskWeights w = started({4.0, 6.0, 7.0});
  for (int i = 0; i < 500; ++i) {
    const TaskLosses l{rng.uniform(0.1, 5), rng.uniform(0.1, 7), rng.uniform(0.1, 8)};
    const std::array<double, 3> g{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)};
    w = gradnorm_step(w, l, {w.w[0] * g[0], w.w[1] * g[1], w.w[2] * g[2]}, 0.1);
    CHECK(std::abs(w.sum() - 3.0) < 1e-9);
    for (double x : w.w) CHECK(x > 0.0);
  }
  CHECK_THROWS_AS(gradnorm_step(started({0.0, 1.0, 1.0}), {1, 1, 1}, {1, 1, 1}, 0.1), DataError);
}

TEST_CASE("cross entropy of uniform logits is log of the vocabulary") {
  OutputDistributions<double> d;
  const std::array<int, 3> sizes{68, 772, 1156};
  for (int h = 0; h < 3; ++h) d.logits[h] = Mat<double>::Constant(4, sizes[h], 0.25);
  Rng rng(1);
  auto target = testing::random_segment(rng, 4, 1, 0);
  const TaskLosses l = feature_loss(d, target);
  for (int h = 0; h < 3; ++h) CHECK(l[h] == doctest::Approx(std::log(sizes[h])).epsilon(1e-12));

  std::array<Mat<double>, kNumHeads> dl;
  cross_entropy_sum<double>(d, target, &dl, 2.0);
  CHECK(dl[0].row(3).isZero());  // padded row
  CHECK(dl[0].row(0).sum() == doctest::Approx(0.0).epsilon(1e-12));

  target.pad_mask.assign(4, true);
  CHECK_THROWS_AS(feature_loss(d, target), DataError);
}

TEST_CASE("training pairs mask unmatched notes") {
  const NoteSequence score = generate_score(1, 300);
  const NoteSequence perf = perform(score, default_profile(0));
  AlignmentMap m;
  for (int k = 0; k < 300; k += 2) m.pairs.emplace_back(k, k);
  const auto pairs = make_training_pairs(score, perf, m, 1);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].target.valid_length() == 128);
  CHECK(pairs[1].target.valid_length() == 22);
  CHECK(pairs[1].score.valid_length() == 44);
  CHECK(pairs[0].score.performer_id == 1);
  CHECK_FALSE(pairs[0].target.pad_mask[0]);
  CHECK(pairs[0].target.pad_mask[1]);
}

TEST_CASE("training lowers the loss and is reproducible") {
  const auto data = tiny_dataset(4, 120);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.warmup_steps = 5;
  cfg.batch_size = 2;
  cfg.max_epochs = 10;
  cfg.seed = 4;

  M2MModel a(tiny_model()), b(tiny_model());
  const TrainLog la = train(a, data, cfg);
  const TrainLog lb = train(b, data, cfg);
  REQUIRE(la.rows.size() == 20);
  CHECK(la.rows.back().total < 0.8 * la.rows.front().total);
  CHECK(train_log_csv(la) == train_log_csv(lb));
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  CHECK(std::abs(la.final_weights.sum() - 3.0) < 1e-9);
  CHECK(la.rows.front().lr == doctest::Approx(3e-3 / 5));

  cfg.max_steps = 3;
  M2MModel c(tiny_model());
  CHECK(train(c, data, cfg).rows.size() == 3);
}

TEST_CASE("non-finite loss names the step") {
  const auto data = tiny_dataset(1, 40);
  M2MModel model(tiny_model());
  model.params().head_w[kIoiHead](0, 0) = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  try {
    train(model, data, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
}
