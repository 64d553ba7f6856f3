#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "s2a/log.h"
#include "s2a/pipeline.h"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kEmpty = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2a: score MIDI to expressive performance audio"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);

  // Overrides applied on top of the configuration file.
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature, top_p, lr;
  std::optional<int> performer;
  std::optional<long> max_steps;
  app.add_option("--seed", seed, "seed for every random stage");

  std::string out, in, in2, checkpoint, log_path, split = "test", corpus;
  bool is_score = false;

  auto* demo = app.add_subcommand("demo-data", "write a synthetic aligned corpus");
  demo->add_option("--out", out, "corpus directory")->required();

  auto* tok = app.add_subcommand("tokenize", "dump the token tuples of a MIDI file");
  tok->add_option("--in", in, "MIDI file")->required()->check(CLI::ExistingFile);
  tok->add_option("--out", out, "output text file")->required();
  tok->add_flag("--score", is_score, "tokenize as a score (velocity fixed)");

  auto* aln = app.add_subcommand("align", "align a performance to its score");
  aln->add_option("--score", in, "score MIDI")->required()->check(CLI::ExistingFile);
  aln->add_option("--perf", in2, "performance MIDI")->required()->check(CLI::ExistingFile);
  aln->add_option("--out", out, "alignment JSON")->required();

  auto* trn = app.add_subcommand("train", "train the score-to-performance model");
  trn->add_option("--corpus", corpus, "corpus directory with manifest.json")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--checkpoint", checkpoint, "output checkpoint")->required();
  trn->add_option("--log", log_path, "training log CSV");
  trn->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
  trn->add_option("--lr", lr, "peak learning rate");

  auto* rnd = app.add_subcommand("render", "predict performance MIDI from scores");
  rnd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  auto* rnd_in = rnd->add_option("--score", in, "score MIDI file")->check(CLI::ExistingFile);
  auto* rnd_corpus = rnd->add_option("--corpus", corpus, "render every entry of a corpus split")
                         ->check(CLI::ExistingDirectory);
  rnd_in->excludes(rnd_corpus);
  rnd->add_option("--split", split, "corpus split to render")->needs(rnd_corpus);
  rnd->add_option("--out", out, "output MIDI file, or directory with --corpus")->required();
  rnd->add_option("--temperature", temperature, "sampling temperature");
  rnd->add_option("--top-p", top_p, "nucleus mass");
  rnd->add_option("--performer", performer, "performer id for --score");

  auto* syn = app.add_subcommand("synth", "synthesize MIDI to WAV");
  syn->add_option("--in", in, "MIDI file or directory")->required()->check(CLI::ExistingPath);
  syn->add_option("--out", out, "WAV file or directory")->required();

  auto* evl = app.add_subcommand("evaluate", "compare predicted and target performances");
  evl->add_option("--pred", in, "directory of predicted MIDI")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--target", in2, "directory of target MIDI (same file names)")->required()
      ->check(CLI::ExistingDirectory);
  evl->add_option("--out", out, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    s2a::PipelineConfig cfg = config_path.empty() ? s2a::PipelineConfig{} : s2a::load_config(config_path);
    if (seed) {
      cfg.model.seed = cfg.train.seed = cfg.sampling.seed = cfg.corpus.seed = *seed;
    }
    if (temperature) cfg.sampling.temperature = *temperature;
    if (top_p) cfg.sampling.top_p = *top_p;
    if (performer) cfg.sampling.performer_id = *performer;
    if (max_steps) cfg.train.max_steps = *max_steps;
    if (lr) cfg.train.learning_rate = *lr;
    cfg.train.validate();

    if (*demo) {
      s2a::cmd_demo_data(cfg, out);
    } else if (*tok) {
      s2a::cmd_tokenize(in, out, is_score);
    } else if (*aln) {
      s2a::cmd_align(in, in2, out, cfg.gap_penalty);
    } else if (*trn) {
      s2a::log_info("config:\n" + s2a::config_to_json(cfg));
      s2a::cmd_train(cfg, corpus, checkpoint, log_path);
    } else if (*rnd) {
      if (!corpus.empty()) {
        s2a::cmd_render_corpus(cfg, checkpoint, corpus, split, out);
      } else if (!in.empty()) {
        s2a::cmd_render(cfg, checkpoint, in, out);
      } else {
        std::cerr << "render: one of --score or --corpus is required\n";
        return kUsage;
      }
    } else if (*syn) {
      s2a::cmd_synth(cfg, in, out);
    } else if (*evl) {
      const auto report = s2a::cmd_evaluate(cfg, in, in2, out);
      std::cout << s2a::report_summary(report);
    }
  } catch (const s2a::EmptyEvaluationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEmpty;
  } catch (const s2a::TrainingError& e) {
    std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kData;
  } catch (const s2a::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
