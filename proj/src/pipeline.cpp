#include "s2a/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

#include "s2a/log.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace s2a {

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!obj.is_object()) throw DataError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw DataError("config: unknown key '" + key + "' in '" + section + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

}  // namespace

PipelineConfig config_from_json(const std::string& text) {
  PipelineConfig c;
  try {
    const json j = json::parse(text);
    check_keys(j, {"schema_version", "model", "train", "sampling", "synth", "corpus", "gap_penalty", "audio_metrics"},
               "root");
    read(j, "schema_version", c.schema_version);
    if (c.schema_version != kConfigSchemaVersion) {
      throw DataError("config: unsupported schema_version " + std::to_string(c.schema_version));
    }
    read(j, "gap_penalty", c.gap_penalty);
    read(j, "audio_metrics", c.audio_metrics);

    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, {"n_layers", "d_model", "n_heads", "d_ff", "dropout", "n_performers", "d_embed", "max_seq_len", "seed"},
                 "model");
      read(m, "n_layers", c.model.n_layers);
      read(m, "d_model", c.model.d_model);
      read(m, "n_heads", c.model.n_heads);
      read(m, "d_ff", c.model.d_ff);
      read(m, "dropout", c.model.dropout);
      read(m, "n_performers", c.model.n_performers);
      read(m, "d_embed", c.model.d_embed);
      read(m, "max_seq_len", c.model.max_seq_len);
      read(m, "seed", c.model.seed);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, {"learning_rate", "warmup_steps", "max_epochs", "max_steps", "batch_size", "alpha", "seed",
                     "gradnorm_lr", "adam_beta1", "adam_beta2", "adam_eps"},
                 "train");
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "warmup_steps", c.train.warmup_steps);
      read(t, "max_epochs", c.train.max_epochs);
      read(t, "max_steps", c.train.max_steps);
      read(t, "batch_size", c.train.batch_size);
      read(t, "alpha", c.train.alpha);
      read(t, "seed", c.train.seed);
      read(t, "gradnorm_lr", c.train.gradnorm_lr);
      read(t, "adam_beta1", c.train.adam_beta1);
      read(t, "adam_beta2", c.train.adam_beta2);
      read(t, "adam_eps", c.train.adam_eps);
    }
    if (j.contains("sampling")) {
      const json& s = j["sampling"];
      check_keys(s, {"temperature", "top_p", "seed", "performer_id"}, "sampling");
      read(s, "temperature", c.sampling.temperature);
      read(s, "top_p", c.sampling.top_p);
      read(s, "seed", c.sampling.seed);
      read(s, "performer_id", c.sampling.performer_id);
    }
    if (j.contains("synth")) {
      const json& s = j["synth"];
      check_keys(s, {"sample_rate", "harmonics", "rolloff", "decay_tau", "attack", "release", "peak", "segment_seconds",
                     "overlap_seconds", "max_lag_seconds", "frame_len", "hop"},
                 "synth");
      read(s, "sample_rate", c.synth.params.sample_rate);
      read(s, "harmonics", c.synth.params.harmonics);
      read(s, "rolloff", c.synth.params.rolloff);
      read(s, "decay_tau", c.synth.params.decay_tau);
      read(s, "attack", c.synth.params.attack);
      read(s, "release", c.synth.params.release);
      read(s, "peak", c.synth.params.peak);
      read(s, "segment_seconds", c.synth.segment_seconds);
      read(s, "overlap_seconds", c.synth.overlap_seconds);
      read(s, "max_lag_seconds", c.synth.max_lag_seconds);
      read(s, "frame_len", c.synth.frame_len);
      read(s, "hop", c.synth.hop);
    }
    if (j.contains("corpus")) {
      const json& s = j["corpus"];
      check_keys(s, {"n_pieces", "notes_per_piece", "n_performers", "seed"}, "corpus");
      read(s, "n_pieces", c.corpus.n_pieces);
      read(s, "notes_per_piece", c.corpus.notes_per_piece);
      read(s, "n_performers", c.corpus.n_performers);
      read(s, "seed", c.corpus.seed);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.model.validate();
  c.train.validate();
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["model"] = {{"n_layers", c.model.n_layers},         {"d_model", c.model.d_model},
                {"n_heads", c.model.n_heads},           {"d_ff", c.model.d_ff},
                {"dropout", c.model.dropout},           {"n_performers", c.model.n_performers},
                {"d_embed", c.model.d_embed},           {"max_seq_len", c.model.max_seq_len},
                {"seed", c.model.seed}};
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"warmup_steps", c.train.warmup_steps},
                {"max_epochs", c.train.max_epochs},       {"max_steps", c.train.max_steps},
                {"batch_size", c.train.batch_size},       {"alpha", c.train.alpha},
                {"seed", c.train.seed},                   {"gradnorm_lr", c.train.gradnorm_lr},
                {"adam_beta1", c.train.adam_beta1},       {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps}};
  j["sampling"] = {{"temperature", c.sampling.temperature},
                   {"top_p", c.sampling.top_p},
                   {"seed", c.sampling.seed},
                   {"performer_id", c.sampling.performer_id}};
  j["synth"] = {{"sample_rate", c.synth.params.sample_rate},   {"harmonics", c.synth.params.harmonics},
                {"rolloff", c.synth.params.rolloff},           {"decay_tau", c.synth.params.decay_tau},
                {"attack", c.synth.params.attack},             {"release", c.synth.params.release},
                {"peak", c.synth.params.peak},                 {"segment_seconds", c.synth.segment_seconds},
                {"overlap_seconds", c.synth.overlap_seconds},  {"max_lag_seconds", c.synth.max_lag_seconds},
                {"frame_len", c.synth.frame_len},              {"hop", c.synth.hop}};
  j["corpus"] = {{"n_pieces", c.corpus.n_pieces},
                 {"notes_per_piece", c.corpus.notes_per_piece},
                 {"n_performers", c.corpus.n_performers},
                 {"seed", c.corpus.seed}};
  j["gap_penalty"] = c.gap_penalty;
  j["audio_metrics"] = c.audio_metrics;
  return j.dump(2) + "\n";
}

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw DataError("cannot create " + parent.string() + ": " + ec.message());
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
}

std::vector<fs::path> midi_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".mid" || ext == ".midi")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

PipelineConfig load_config(const std::string& path) { return config_from_json(read_text(path)); }

NoteSequence load_midi(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ParseResult r = parse_smf_with_warnings(bytes);
  for (const auto& w : r.warnings) log_warn(path + ": " + w);
  return std::move(r.sequence);
}

// ---------------------------------------------------------------------------
// Training data

std::vector<TrainingPair> make_training_pairs(const NoteSequence& score, const NoteSequence& performance,
                                              const AlignmentMap& alignment, int performer_id) {
  const auto score_toks = tokenize(resample_grid(score, kBeatResolution), true);
  const auto perf_toks = tokenize(resample_grid(performance, kBeatResolution), false);

  std::vector<TokenTuple> target(score_toks.size());
  std::vector<bool> matched(score_toks.size(), false);
  for (const auto& [i, j] : alignment.pairs) {
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= score_toks.size() ||
        static_cast<std::size_t>(j) >= perf_toks.size()) {
      throw DataError("alignment index out of range");
    }
    target[static_cast<std::size_t>(i)] = perf_toks[static_cast<std::size_t>(j)];
    matched[static_cast<std::size_t>(i)] = true;
  }

  auto score_segs = segment(score_toks, performer_id);
  auto target_segs = segment(target, performer_id);
  std::vector<TrainingPair> pairs;
  for (std::size_t k = 0; k < score_segs.size(); ++k) {
    TokenSegment& t = target_segs[k];
    bool any = false;
    for (std::size_t p = 0; p < t.pad_mask.size(); ++p) {
      const std::size_t src = static_cast<std::size_t>(t.source_offset) + p;
      t.pad_mask[p] = score_segs[k].pad_mask[p] || src >= matched.size() || !matched[src];
      any = any || !t.pad_mask[p];
    }
    if (any) pairs.push_back({std::move(score_segs[k]), std::move(t)});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Commands

std::vector<CorpusEntry> cmd_demo_data(const PipelineConfig& cfg, const std::string& out_dir) {
  auto entries = write_corpus(cfg.corpus, out_dir);
  log_info("wrote " + std::to_string(entries.size()) + " corpus entries to " + out_dir + " (seed " +
           std::to_string(cfg.corpus.seed) + ")");
  return entries;
}

void cmd_tokenize(const std::string& midi_path, const std::string& out_path, bool is_score) {
  const auto tuples = tokenize(resample_grid(load_midi(midi_path), kBeatResolution), is_score);
  ensure_parent(out_path);
  write_text(out_path, format_token_dump(tuples));
}

AlignmentMap cmd_align(const std::string& score_path, const std::string& perf_path, const std::string& out_path,
                       double gap_penalty) {
  const AlignmentMap map = align_notes(load_midi(score_path), load_midi(perf_path), gap_penalty);
  ensure_parent(out_path);
  write_text(out_path, alignment_to_json(map) + "\n");
  return map;
}

TrainLog cmd_train(const PipelineConfig& cfg, const std::string& corpus_dir, const std::string& checkpoint_path,
                   const std::string& log_path) {
  const fs::path root(corpus_dir);
  std::vector<TrainingPair> dataset;
  for (const auto& e : read_manifest(corpus_dir)) {
    if (e.split != "train") continue;
    if (e.performer >= cfg.model.n_performers) {
      throw DataError("performer id " + std::to_string(e.performer) + " exceeds model n_performers " +
                      std::to_string(cfg.model.n_performers));
    }
    const NoteSequence score = load_midi((root / e.score).string());
    const NoteSequence perf = load_midi((root / e.performance).string());
    const fs::path align_path = root / e.alignment;
    const AlignmentMap map = fs::exists(align_path) ? alignment_from_json(read_text(align_path.string()))
                                                    : align_notes(score, perf, cfg.gap_penalty);
    auto pairs = make_training_pairs(score, perf, map, e.performer);
    std::move(pairs.begin(), pairs.end(), std::back_inserter(dataset));
  }
  if (dataset.empty()) throw DataError("no training segments under " + corpus_dir);
  log_info("training on " + std::to_string(dataset.size()) + " segments (seed " + std::to_string(cfg.train.seed) + ")");

  M2MModel model(cfg.model);
  TrainLog log = train(model, dataset, cfg.train);
  ensure_parent(checkpoint_path);
  save_checkpoint(model, checkpoint_path);
  if (!log_path.empty()) {
    ensure_parent(log_path);
    write_text(log_path, train_log_csv(log));
  }
  return log;
}

namespace {

void render_one(const M2MModel& model, const SamplingConfig& s, int performer, const std::string& score_path,
                const std::string& out_path) {
  const NoteSequence pred =
      predict_performance(model, load_midi(score_path), performer, s.temperature, s.top_p, s.seed);
  ensure_parent(out_path);
  write_midi_file(out_path, pred);
  const json meta{{"score", fs::path(score_path).filename().string()},
                  {"performer_id", performer},
                  {"temperature", s.temperature},
                  {"top_p", s.top_p},
                  {"seed", s.seed}};
  write_text(out_path + ".json", meta.dump(2) + "\n");
}

}  // namespace

void cmd_render(const PipelineConfig& cfg, const std::string& checkpoint_path, const std::string& score_path,
                const std::string& out_path) {
  const M2MModel model = load_checkpoint(checkpoint_path);
  render_one(model, cfg.sampling, cfg.sampling.performer_id, score_path, out_path);
}

std::vector<std::string> cmd_render_corpus(const PipelineConfig& cfg, const std::string& checkpoint_path,
                                           const std::string& corpus_dir, const std::string& split,
                                           const std::string& out_dir) {
  const M2MModel model = load_checkpoint(checkpoint_path);
  ensure_dir(out_dir);
  std::vector<std::string> written;
  for (const auto& e : read_manifest(corpus_dir)) {
    if (e.split != split) continue;
    const std::string out =
        (fs::path(out_dir) / ("p" + std::to_string(e.performer) + "_" + e.piece + ".mid")).string();
    render_one(model, cfg.sampling, e.performer, (fs::path(corpus_dir) / e.score).string(), out);
    written.push_back(out);
  }
  if (written.empty()) log_warn("no corpus entries in split '" + split + "'");
  return written;
}

namespace {

Waveform synthesize(const SynthStageConfig& s, const NoteSequence& seq) {
  Waveform w = render_audio(seq, s.params);
  if (w.seconds() > s.segment_seconds) {
    w = stitch_segments(segment_audio(w, s.segment_seconds, s.overlap_seconds), s.max_lag_seconds, s.overlap_seconds);
  }
  return w;
}

}  // namespace

std::vector<std::string> cmd_synth(const PipelineConfig& cfg, const std::string& input, const std::string& output) {
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(input)) {
    ensure_dir(output);
    for (const auto& f : midi_files(input)) {
      jobs.emplace_back(f, fs::path(output) / f.filename().replace_extension(".wav"));
    }
  } else {
    ensure_parent(output);
    jobs.emplace_back(input, output);
  }
  std::vector<std::string> written;
  for (const auto& [in, out] : jobs) {
    const NoteSequence seq = load_midi(in.string());
    const Waveform w = synthesize(cfg.synth, seq);
    if (w.samples.empty()) log_warn(in.string() + ": no notes, writing an empty WAV");
    write_wav(out.string(), w);
    written.push_back(out.string());
  }
  return written;
}

MetricReport cmd_evaluate(const PipelineConfig& cfg, const std::string& pred_dir, const std::string& target_dir,
                          const std::string& out_dir) {
  if (!fs::is_directory(pred_dir)) throw DataError("not a directory: " + pred_dir);
  if (!fs::is_directory(target_dir)) throw DataError("not a directory: " + target_dir);

  std::vector<EvaluationItem> items;
  for (const auto& pred_path : midi_files(pred_dir)) {
    const fs::path target_path = fs::path(target_dir) / pred_path.filename();
    if (!fs::exists(target_path)) {
      log_warn("no target for " + pred_path.filename().string() + ", skipped");
      continue;
    }
    EvaluationItem item;
    item.name = pred_path.stem().string();
    item.predicted = load_midi(pred_path.string());
    item.target = load_midi(target_path.string());
    item.alignment = align_notes(item.predicted, item.target, cfg.gap_penalty);
    items.push_back(std::move(item));
  }

  MetricReport report = evaluate_m2m(items);
  if (report.performance.rows.empty()) throw EmptyEvaluationError("evaluation found no matched notes");

  if (cfg.audio_metrics) {
    for (const auto& item : items) {
      const auto pred_spec = midi_spectrogram(render_audio(item.predicted, cfg.synth.params), cfg.synth.frame_len,
                                              cfg.synth.hop);
      const auto target_spec = midi_spectrogram(render_audio(item.target, cfg.synth.params), cfg.synth.frame_len,
                                                cfg.synth.hop);
      report.spectrogram_mse.push_back(spectrogram_mse(pred_spec, target_spec));
      report.chroma_mse.push_back(chroma_mse(chromagram(pred_spec), chromagram(target_spec)));
    }
    report.finalize();
  }

  ensure_dir(out_dir);
  write_text((fs::path(out_dir) / "report.json").string(), report_to_json(report));
  write_text((fs::path(out_dir) / "report.csv").string(), report_to_csv(report));
  write_text((fs::path(out_dir) / "summary.txt").string(), report_summary(report));
  return report;
}

}  // namespace s2a
