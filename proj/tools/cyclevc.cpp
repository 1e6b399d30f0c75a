// cyclevc: featurize, train, convert and evaluate from the command line.
//
// Exit status: 0 success, 1 user error (bad flags, config, input files),
// 2 internal error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cyclevc/cyclevc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cyclevc;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

// ---------------------------------------------------------------------------
// Run configuration: one JSON document, flags win over file values.

struct MetricsConfig {
  std::size_t fft_len = 512;
  std::string ms_mode = "utterance";
  std::size_t segment_frames = 128;
};

struct RunConfig {
  TrainingConfig training;
  AnalyzerConfig analyzer;
  MetricsConfig metrics;
  std::string backend = "stub";
  std::string cache_dir;
  std::string source, target, converted, out;
};

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("unknown " + where + " key '" + k + "'");
}

void apply_config_file(RunConfig& rc, const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  reject_unknown(j, {"training", "analyzer", "metrics", "backend", "cache_dir", "source", "target", "converted", "out"},
                 "config");
  try {
    if (j.contains("training")) update_from_json(rc.training, j.at("training"));
    if (j.contains("analyzer")) {
      const json& a = j.at("analyzer");
      reject_unknown(a, {"sample_rate", "frame_period_ms", "mcep_order"}, "analyzer");
      rc.analyzer.sample_rate = a.value("sample_rate", rc.analyzer.sample_rate);
      rc.analyzer.frame_period_ms = a.value("frame_period_ms", rc.analyzer.frame_period_ms);
      rc.analyzer.mcep_order = a.value("mcep_order", rc.analyzer.mcep_order);
    }
    if (j.contains("metrics")) {
      const json& m = j.at("metrics");
      reject_unknown(m, {"fft_len", "ms_mode", "segment_frames"}, "metrics");
      rc.metrics.fft_len = m.value("fft_len", rc.metrics.fft_len);
      rc.metrics.ms_mode = m.value("ms_mode", rc.metrics.ms_mode);
      rc.metrics.segment_frames = m.value("segment_frames", rc.metrics.segment_frames);
    }
    rc.backend = j.value("backend", rc.backend);
    rc.cache_dir = j.value("cache_dir", rc.cache_dir);
    rc.source = j.value("source", rc.source);
    rc.target = j.value("target", rc.target);
    rc.converted = j.value("converted", rc.converted);
    rc.out = j.value("out", rc.out);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

json to_json(const RunConfig& rc) {
  return {{"training", rc.training},
          {"analyzer",
           {{"sample_rate", rc.analyzer.sample_rate},
            {"frame_period_ms", rc.analyzer.frame_period_ms},
            {"mcep_order", rc.analyzer.mcep_order}}},
          {"metrics",
           {{"fft_len", rc.metrics.fft_len},
            {"ms_mode", rc.metrics.ms_mode},
            {"segment_frames", rc.metrics.segment_frames}}},
          {"backend", rc.backend},
          {"cache_dir", rc.cache_dir},
          {"source", rc.source},
          {"target", rc.target},
          {"converted", rc.converted},
          {"out", rc.out}};
}

void write_effective_config(const fs::path& dir, const RunConfig& rc, const std::string& command) {
  json j = to_json(rc);
  j["command"] = command;
  write_text_file(dir / "config.json", j.dump(2) + "\n");
}

MsOptions ms_options(const RunConfig& rc) {
  MsOptions o;
  o.fft_len = rc.metrics.fft_len;
  o.segment_frames = rc.metrics.segment_frames;
  o.frame_period_ms = rc.analyzer.frame_period_ms;
  if (rc.metrics.ms_mode == "utterance") o.mode = MsMode::Utterance;
  else if (rc.metrics.ms_mode == "segment") o.mode = MsMode::Segment;
  else throw ValidationError("ms_mode must be 'utterance' or 'segment'");
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// Files

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

constexpr const char* kFeatureExt = ".cvf";
constexpr const char* kStatsFile = "stats.json";

std::vector<FeatureSet> load_corpus(const fs::path& dir, std::vector<fs::path>* names = nullptr) {
  const auto files = list_files(dir, kFeatureExt);
  if (files.empty()) throw IoError("no " + std::string(kFeatureExt) + " feature files in " + dir.string());
  std::vector<FeatureSet> out;
  for (const auto& f : files) {
    out.push_back(load_features(f));
    if (names) names->push_back(f.filename());
  }
  return out;
}

SpeakerStats stats_for(const fs::path& dir, const std::vector<FeatureSet>& corpus) {
  if (fs::exists(dir / kStatsFile)) return load_speaker_stats(dir / kStatsFile);
  std::vector<McepSequence> m;
  std::vector<F0Track> f;
  for (const auto& fs_ : corpus) {
    m.push_back(fs_.mcep);
    f.push_back(fs_.f0);
  }
  return {compute_mcep_stats(m), compute_f0_stats(f)};
}

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required ") + flag);
  const fs::path p(value);
  if (!fs::is_directory(p)) throw IoError(std::string(flag) + " " + value + " is not a readable directory");
  return p;
}

fs::path make_out_dir(const std::string& value) {
  if (value.empty()) throw ValidationError("missing required --out");
  fs::create_directories(value);
  return value;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_featurize(RunConfig rc, const std::string& input) {
  const fs::path in = require_dir(input, "--input");
  if (rc.out.empty()) {
    const char* root = std::getenv("CYCLEVC_CACHE");
    const std::string base = !rc.cache_dir.empty() ? rc.cache_dir : (root ? root : "");
    if (base.empty()) throw ValidationError("missing --out (or set CYCLEVC_CACHE / cache_dir)");
    rc.out = (fs::path(base) / fs::absolute(in).lexically_normal().filename()).string();
  }
  rc.analyzer.validate();
  const auto vocoder = make_vocoder(rc.backend);
  const fs::path out = make_out_dir(rc.out);
  const auto files = list_files(in, ".wav");
  if (files.empty()) throw IoError("no .wav files in " + in.string());

  std::vector<McepSequence> mceps;
  std::vector<F0Track> f0s;
  for (const auto& f : files) {
    try {
      const FeatureSet feats = vocoder->analyze(load_wav(f), rc.analyzer);
      save_features(out / f.filename().replace_extension(kFeatureExt), feats);
      mceps.push_back(feats.mcep);
      f0s.push_back(feats.f0);
    } catch (const Error& e) {
      const std::string msg = e.what();
      const std::string where = f.string();
      std::cerr << "warning: skipped " << (msg.starts_with(where) ? msg : where + ": " + msg) << "\n";
    }
  }
  if (mceps.empty()) throw IoError("no file in " + in.string() + " could be featurized");
  SpeakerStats stats{compute_mcep_stats(mceps), F0Stats{}};
  try {
    stats.f0 = compute_f0_stats(f0s);
  } catch (const ValidationError&) {
    std::cerr << "warning: no voiced frames in " << in.string() << "; F0 statistics left at log-mean 0, log-std 1\n";
  }
  save_speaker_stats(out / kStatsFile, stats);
  write_effective_config(out, rc, "featurize");
  std::cout << "featurized " << mceps.size() << " of " << files.size() << " files into " << out.string() << "\n";
  return 0;
}

int cmd_train(RunConfig rc, const std::string& resume, std::size_t log_every) {
  const fs::path src = require_dir(rc.source, "--source");
  const fs::path tgt = require_dir(rc.target, "--target");
  const fs::path out = make_out_dir(rc.out);

  std::optional<TrainerState> start;
  if (!resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume, &rc.training);
    for (const auto& w : ck.warnings) std::cerr << "warning: " << w << "\n";
    start = std::move(ck.state);
  }
  rc.training.validate();

  const auto cx = load_corpus(src);
  const auto cy = load_corpus(tgt);
  const SpeakerStats sx = stats_for(src, cx), sy = stats_for(tgt, cy);
  std::vector<Matrix> nx, ny;
  for (const auto& f : cx) nx.push_back(normalize(f.mcep, sx.mcep).frames);
  for (const auto& f : cy) ny.push_back(normalize(f.mcep, sy.mcep).frames);
  if (rc.training.model.generator.feature_dims != sx.mcep.mean.size())
    throw ValidationError("model expects " + std::to_string(rc.training.model.generator.feature_dims) +
                          " feature dims, corpus has " + std::to_string(sx.mcep.mean.size()));

  write_effective_config(out, rc, "train");
  save_speaker_stats(out / "source_stats.json", sx);
  save_speaker_stats(out / "target_stats.json", sy);

  std::ofstream progress(out / "progress.jsonl", start ? std::ios::app : std::ios::trunc);
  if (!progress) throw IoError("cannot write " + (out / "progress.jsonl").string());
  TrainCallbacks cb;
  cb.on_progress = [&](const ProgressRecord& r) {
    progress << cyclevc::to_json(r).dump() << "\n";
    if (log_every > 0 && (r.iteration + 1) % log_every == 0)
      std::cerr << "iter " << r.iteration + 1 << "  total_g " << r.losses.total_g << "  cyc " << r.losses.cyc
                << "  d_x " << r.losses.adv_d_x << "  d_y " << r.losses.adv_d_y << "\n";
  };
  cb.on_checkpoint = [&](const TrainerState& s) {
    const fs::path p = out / ("ckpt_" + std::to_string(s.iteration) + ".cvc");
    try {
      save_checkpoint(p, s, rc.training);
    } catch (const Error& e) {
      throw IoError("checkpoint at iteration " + std::to_string(s.iteration) + ": " + e.what());
    }
    progress.flush();
  };
  const TrainerState final_state = train(rc.training, nx, ny, cb, std::move(start));
  save_checkpoint(out / "final.cvc", final_state, rc.training);
  save_generator(out / "gen_xy.cvg", final_state.nets.gen_xy);
  save_generator(out / "gen_yx.cvg", final_state.nets.gen_yx);
  std::cout << "trained to iteration " << final_state.iteration << "; outputs in " << out.string() << "\n";
  return 0;
}

int cmd_convert(RunConfig rc, const std::string& model, const std::string& direction, const std::string& input,
                const std::string& src_stats, const std::string& tgt_stats, bool features_only) {
  const fs::path in = require_dir(input, "--input");
  if (model.empty()) throw ValidationError("missing required --model");
  if (direction != "xy" && direction != "yx") throw ValidationError("--direction must be 'xy' or 'yx'");
  const fs::path model_path(model);
  GeneratorParams<float> gen;
  if (model_path.extension() == ".cvc") {
    const LoadedCheckpoint ck = load_checkpoint(model_path);
    gen = direction == "xy" ? ck.state.nets.gen_xy : ck.state.nets.gen_yx;
  } else {
    gen = load_generator(model_path);
  }
  // statistics default to the ones training wrote next to the model
  const fs::path dir = model_path.parent_path();
  const bool forward = direction == "xy";
  const SpeakerStats from = load_speaker_stats(
      !src_stats.empty() ? fs::path(src_stats) : dir / (forward ? "source_stats.json" : "target_stats.json"));
  const SpeakerStats to = load_speaker_stats(
      !tgt_stats.empty() ? fs::path(tgt_stats) : dir / (forward ? "target_stats.json" : "source_stats.json"));
  const VoiceConverter vc = make_converter(std::move(gen), from, to, rc.analyzer);
  const fs::path out = make_out_dir(rc.out);

  std::size_t done = 0;
  if (features_only) {
    for (const auto& f : list_files(in, kFeatureExt)) {
      try {
        save_features(out / f.filename(), convert_features(load_features(f), vc));
      } catch (const ConversionError& e) {
        throw ConversionError(e.stage(), f.string() + ": " + e.what());
      }
      ++done;
    }
  } else {
    const auto vocoder = make_vocoder(rc.backend);
    for (const auto& f : list_files(in, ".wav")) {
      try {
        save_wav(out / f.filename(), convert_utterance(load_wav(f), vc, *vocoder));
      } catch (const ConversionError& e) {
        throw ConversionError(e.stage(), f.string() + ": " + e.what());
      }
      ++done;
    }
  }
  if (done == 0) throw IoError("no input files in " + in.string());
  write_effective_config(out, rc, "convert");
  std::cout << "converted " << done << " files into " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(RunConfig rc) {
  const fs::path src = require_dir(rc.source, "--source");
  const fs::path tgt = require_dir(rc.target, "--target");
  const fs::path conv = require_dir(rc.converted, "--converted");
  const MsOptions opts = ms_options(rc);
  const fs::path out = make_out_dir(rc.out);
  const auto mceps = [](const std::vector<FeatureSet>& c) {
    std::vector<McepSequence> m;
    for (const auto& f : c) m.push_back(f.mcep);
    return m;
  };
  const MetricsReport r = build_report(mceps(load_corpus(src)), mceps(load_corpus(tgt)), mceps(load_corpus(conv)),
                                       opts, {{"source", rc.source}, {"target", rc.target}, {"converted", rc.converted}});
  write_report(out, r);
  write_effective_config(out, rc, "evaluate");
  std::cout << "ms_rmse " << r.ms_rmse << " dB (source " << r.ms_rmse_source << " dB); report in " << out.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel-data-free voice conversion with cycle-consistent gated CNNs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cyclevc 1.0");

  std::string config_path, backend, resume, model, direction = "xy", input, src_stats, tgt_stats, model_preset;
  std::optional<std::uint64_t> seed, total_iters, checkpoint_every;
  std::optional<std::size_t> fft_len;
  std::size_t log_every = 100;
  bool features_only = false;
  RunConfig flags;

  const auto common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "JSON run configuration; flags override its values")->check(CLI::ExistingFile);
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--backend", backend, "Vocoder backend: stub or world (alias real)");
    c->add_option("--out", flags.out, "Output directory");
  };

  CLI::App* featurize = app.add_subcommand("featurize", "Analyze a directory of 16-bit mono WAV files");
  common(featurize);
  featurize->add_option("--input", input, "Directory of .wav files")->required();
  featurize->footer("Without --out, features go to $CYCLEVC_CACHE/<input directory name>.");

  CLI::App* trainc = app.add_subcommand("train", "Train both mapping directions on two feature caches");
  common(trainc);
  trainc->add_option("--source", flags.source, "Feature cache of speaker X");
  trainc->add_option("--target", flags.target, "Feature cache of speaker Y");
  trainc->add_option("--total-iters", total_iters, "Total iterations to reach");
  trainc->add_option("--checkpoint-every", checkpoint_every, "Checkpoint period (0: final only)");
  trainc->add_option("--model", model_preset, "Architecture preset: full or tiny");
  trainc->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  trainc->add_option("--log-every", log_every, "Print losses every N iterations (0: quiet)");

  CLI::App* convert = app.add_subcommand("convert", "Convert utterances with a trained generator");
  common(convert);
  convert->add_option("--model", model, "Generator (.cvg) or checkpoint (.cvc)")->required()->check(CLI::ExistingFile);
  convert->add_option("--direction", direction, "xy or yx (checkpoints, default statistics)");
  convert->add_option("--input", input, "Directory of .wav files, or .cvf files with --features-only")->required();
  convert->add_option("--source-stats", src_stats, "Statistics of the input speaker");
  convert->add_option("--target-stats", tgt_stats, "Statistics of the output speaker");
  convert->add_flag("--features-only", features_only, "Convert feature caches; no vocoder needed");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Global variance and modulation-spectrum report");
  common(evaluate);
  evaluate->add_option("--source", flags.source, "Feature cache of unconverted source speech");
  evaluate->add_option("--target", flags.target, "Feature cache of target speech");
  evaluate->add_option("--converted", flags.converted, "Feature cache of converted speech");
  evaluate->add_option("--fft-len", fft_len, "Modulation-spectrum FFT length (power of two)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUser;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) apply_config_file(rc, config_path);
    for (auto [dst, src] : {std::pair{&rc.source, &flags.source}, std::pair{&rc.target, &flags.target},
                            std::pair{&rc.converted, &flags.converted}, std::pair{&rc.out, &flags.out}})
      if (!src->empty()) *dst = *src;
    if (!backend.empty()) rc.backend = backend;
    if (!model_preset.empty()) update_from_json(rc.training, json{{"model", model_preset}});
    if (seed) rc.training.seed = *seed;
    if (total_iters) rc.training.total_iters = *total_iters;
    if (checkpoint_every) rc.training.checkpoint_every = *checkpoint_every;
    if (fft_len) rc.metrics.fft_len = *fft_len;

    if (featurize->parsed()) return cmd_featurize(rc, input);
    if (trainc->parsed()) return cmd_train(rc, resume, log_every);
    if (convert->parsed()) return cmd_convert(rc, model, direction, input, src_stats, tgt_stats, features_only);
    if (evaluate->parsed()) return cmd_evaluate(rc);
    return kExitUser;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const ShapeError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
