#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s2a/pipeline.h"
#include "support.h"

using namespace s2a;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.corpus.n_pieces = 3;
  c.corpus.notes_per_piece = 40;
  c.corpus.n_performers = 2;
  c.model.n_layers = 1;
  c.model.d_model = 16;
  c.model.n_heads = 2;
  c.model.d_ff = 32;
  c.train.max_steps = 2;
  c.train.batch_size = 2;
  c.synth.segment_seconds = 4.0;
  return c;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(S2A_CLI) + " " + args + " 2>/dev/null >/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config json round trip and strictness") {
  PipelineConfig c = small_config();
  c.sampling.top_p = 0.75;
  const PipelineConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.sampling.top_p == 0.75);
  CHECK(config_from_json("{}").model.d_model == 64);
  CHECK_THROWS_WITH_AS(config_from_json(R"({"model": {"d_modle": 8}})"), doctest::Contains("d_modle"), DataError);
  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 2})"), DataError);
  CHECK_THROWS_AS(config_from_json(R"({"model": {"d_model": 10, "n_heads": 4}})"), DataError);
  CHECK_THROWS_AS(config_from_json("[1,"), DataError);
}

TEST_CASE("synthetic corpus") {
  const NoteSequence score = generate_score(3, 100);
  CHECK(score.notes.size() == 100);
  CHECK(score.ppq == 96);
  for (const auto& n : score.notes) CHECK(n.velocity == 60);
  const NoteSequence perf = perform(score, default_profile(1));
  REQUIRE(perf.notes.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(perf.notes[i].pitch == score.notes[i].pitch);
  perf.validate();
  CHECK(align_notes(score, perf).pairs.size() == 100);

  CHECK(assign_splits(1) == std::vector<std::string>{"train"});
  CHECK(assign_splits(2) == std::vector<std::string>{"train", "test"});
  const auto s20 = assign_splits(20);
  CHECK(std::count(s20.begin(), s20.end(), "test") == 2);
  CHECK(std::count(s20.begin(), s20.end(), "valid") == 2);
}

TEST_CASE("end to end through the library") {
  TempDir dir("s2a_pipeline_test");
  const PipelineConfig cfg = small_config();
  const auto entries = cmd_demo_data(cfg, dir / "corpus");
  CHECK(entries.size() == 6);
  CHECK(read_manifest(dir / "corpus").size() == 6);

  cmd_tokenize(dir / "corpus/scores/piece_000.mid", dir / "tokens.tsv", true);
  CHECK(parse_token_dump(slurp(dir / "tokens.tsv")).size() == 40);
  const AlignmentMap m = cmd_align(dir / "corpus/scores/piece_000.mid", dir / "corpus/performances/p1_piece_000.mid",
                                   dir / "align.json", 0.5);
  CHECK(m.pairs.size() == 40);

  const TrainLog log = cmd_train(cfg, dir / "corpus", dir / "model.ckpt", dir / "train.csv");
  CHECK(log.rows.size() == 2);
  const auto preds = cmd_render_corpus(cfg, dir / "model.ckpt", dir / "corpus", "test", dir / "pred");
  CHECK(preds.size() == 2);
  const auto wavs = cmd_synth(cfg, dir / "pred", dir / "wav");
  CHECK(wavs.size() == 2);
  CHECK(decode_wav([&] {
          const std::string s = slurp(wavs[0]);
          return std::vector<std::uint8_t>(s.begin(), s.end());
        }())
            .samples.size() > 0);

  const MetricReport r = cmd_evaluate(cfg, dir / "pred", dir / "corpus/performances", dir / "report");
  CHECK(r.performance.rows.size() == 2);
  CHECK(fs::exists(dir / "report/report.json"));
  CHECK(fs::exists(dir / "report/summary.txt"));

  SUBCASE("a performance evaluated against itself scores perfectly") {
    const MetricReport self = cmd_evaluate(cfg, dir / "corpus/performances", dir / "corpus/performances", dir / "self");
    for (int h = 0; h < kNumHeads; ++h) {
      CHECK(self.performance.features[h].kld.mean < 1e-9);
      CHECK(self.performance.features[h].dtwd.mean == 0.0);
    }
    CHECK(self.spectrogram_agg.mean == 0.0);
    CHECK(self.chroma_agg.mean == 0.0);
  }
  SUBCASE("nothing to compare") {
    fs::create_directories(dir / "empty");
    CHECK_THROWS_AS(cmd_evaluate(cfg, dir / "empty", dir / "corpus/performances", dir / "r2"), EmptyEvaluationError);
  }
  SUBCASE("rendering twice is identical") {
    cmd_render(cfg, dir / "model.ckpt", dir / "corpus/scores/piece_001.mid", dir / "a.mid");
    cmd_render(cfg, dir / "model.ckpt", dir / "corpus/scores/piece_001.mid", dir / "b.mid");
    CHECK(slurp(dir / "a.mid") == slurp(dir / "b.mid"));
    CHECK(slurp(dir / "a.mid.json") == slurp(dir / "b.mid.json"));
  }
}

TEST_CASE("command line exit codes") {
  TempDir dir("s2a_cli_test");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("demo-data --out " + (dir / "c")) == 0);
  CHECK(fs::exists(dir / "c/manifest.json"));

  std::ofstream(dir / "bad.mid") << "not midi";
  CHECK(run_cli("tokenize --in " + (dir / "bad.mid") + " --out " + (dir / "t.tsv")) == 2);
  std::ofstream(dir / "bad.json") << R"({"train": {"learning_rat": 1}})";
  CHECK(run_cli("--config " + (dir / "bad.json") + " demo-data --out " + (dir / "d")) == 2);

  fs::create_directories(dir / "none");
  CHECK(run_cli("evaluate --pred " + (dir / "none") + " --target " + (dir / "c/performances") + " --out " +
                (dir / "r")) == 3);
}
