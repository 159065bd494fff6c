// smgaa: corpus generation, degradation, featurization, training, evaluation
// and complexity inspection.
//
// Exit codes: 0 success, 1 some items failed (the rest were processed),
// 2 error (bad flags, bad config, unreadable input).

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "smgaa/config.hpp"
#include "smgaa/corpus.hpp"
#include "smgaa/error.hpp"
#include "smgaa/evaluation.hpp"
#include "smgaa/io.hpp"
#include "smgaa/log.hpp"
#include "smgaa/model.hpp"
#include "smgaa/synth.hpp"
#include "smgaa/training.hpp"

namespace fs = std::filesystem;
using namespace smgaa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out;
  std::optional<std::string> feature;
  std::string duration = "all";
  std::string condition = "all";
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "experiment config file (key = value)");
  cmd->add_option("--seed", c.seed, "seed; overrides the config");
  cmd->add_option("--workers", c.workers, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--feature", c.feature, "mfcc, lfcc or cqcc");
  cmd->add_option("--duration", c.duration, "0.5, 1.0, 1.5, 2.0 or all");
  cmd->add_option("--condition", c.condition, "c0..c5 or all");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = cfg.train.seed = *c.seed;
  if (c.feature) cfg.data.feature = features::parse_kind(*c.feature);
  if (c.duration != "all") cfg.data.durations = {parse_duration(c.duration)};
  cfg.validate();
  if (c.workers > 0) omp_set_num_threads(c.workers);
  return cfg;
}

std::vector<int> conditions(const std::string& s) {
  if (s == "all") return {0, 1, 2, 3, 4, 5};
  std::string up = s;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) { return std::toupper(ch); });
  return {parse_condition(up)};
}

bool wanted(const ExperimentConfig& cfg, double duration) {
  return std::find(cfg.data.durations.begin(), cfg.data.durations.end(), duration) != cfg.data.durations.end();
}

void write_resolved(const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream f(dir / "config.txt");
  f << cfg.to_text();
  if (!f) throw IoError("cli", "cannot write " + (dir / "config.txt").string());
}

fs::path model_path(const fs::path& dir, double d) { return dir / ("model_" + duration_name(d) + ".smgc"); }

std::vector<corpus::ManifestRow> filter(std::vector<corpus::ManifestRow> rows, const ExperimentConfig& cfg,
                                        const std::vector<int>& conds) {
  std::erase_if(rows, [&](const corpus::ManifestRow& r) {
    return !wanted(cfg, r.duration) || std::find(conds.begin(), conds.end(), r.condition) == conds.end();
  });
  return rows;
}

int cmd_synth(const Common& c, std::size_t n) {
  const auto cfg = resolve(c);
  const fs::path out(c.out);
  fs::create_directories(out / "wav");
  if (n == 0) n = cfg.data.n_per_class;
  const auto records = synth::make_corpus(n, cfg.data.durations, cfg.seed);
  std::vector<corpus::ManifestRow> rows;
  for (const auto& r : records) {
    const auto path = out / "wav" / (r.id + ".wav");
    io::write_wav(path, r.clip.samples, kSampleRate);
    rows.push_back({r.id, path, r.clip.label, r.clip.duration_s, 0, ""});
  }
  corpus::write_manifest(out / "manifest.csv", rows);
  write_resolved(out, cfg);
  log::info("synth: " + std::to_string(rows.size()) + " clips, band-energy oracle EER 0");
  return 0;
}

int cmd_degrade(const Common& c, const std::string& manifest) {
  const auto cfg = resolve(c);
  const auto conds = conditions(c.condition);
  const fs::path out(c.out);
  fs::create_directories(out / "wav");
  std::vector<ClipRecord> clean;
  std::size_t failed = 0;
  for (const auto& row : filter(corpus::read_manifest(manifest), cfg, {0})) {
    try {
      clean.push_back(corpus::load_clip(row));
    } catch (const Error& e) {
      log::error(e.what());
      ++failed;
    }
  }
  const auto degraded = corpus::degrade_records(clean, conds, cfg.seed, cfg.data.conditions, c.workers);
  std::vector<corpus::ManifestRow> rows;
  for (const auto& r : degraded) {
    const auto path = out / "wav" / (corpus::file_stem(r.id, r.clip.condition) + ".wav");
    io::write_wav(path, r.clip.samples, kSampleRate);
    rows.push_back({r.id, path, r.clip.label, r.clip.duration_s, r.clip.condition, ""});
  }
  corpus::write_manifest(out / "manifest.csv", rows);
  write_resolved(out, cfg);
  log::info("degrade: " + std::to_string(rows.size()) + " clips written, " + std::to_string(failed) + " failed");
  return failed ? 1 : 0;
}

int cmd_featurize(const Common& c, const std::string& manifest) {
  const auto cfg = resolve(c);
  const auto rows = filter(corpus::read_manifest(manifest), cfg, conditions(c.condition));
  const fs::path out(c.out);
  fs::create_directories(out / "feat");
  const auto kind = cfg.data.feature;
  std::vector<std::optional<corpus::ManifestRow>> done(rows.size());
  std::mutex log_mu;
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    try {
      const auto rec = corpus::load_clip(row);
      const auto fm = features::featurize(rec.clip, kind);
      const Shape& s = fm.tensor.shape();
      const auto path = out / "feat" / (corpus::file_stem(row.id, row.condition) + ".smgt");
      io::save_tensor(path, fm.tensor.reshaped({1, s[2], s[3]}));
      done[static_cast<std::size_t>(i)] =
          corpus::ManifestRow{row.id, path, row.label, row.duration, row.condition, features::kind_name(kind)};
    } catch (const Error& e) {
      std::lock_guard lock(log_mu);
      log::error(e.what());
    }
  }
  std::vector<corpus::ManifestRow> written;
  for (auto& d : done)
    if (d) written.push_back(std::move(*d));
  corpus::write_manifest(out / "manifest.csv", written);
  write_resolved(out, cfg);
  const std::size_t failed = rows.size() - written.size();
  log::info("featurize: " + std::to_string(written.size()) + " written, " + std::to_string(failed) + " failed");
  return failed ? 1 : 0;
}

int cmd_train(const Common& c, const std::string& manifest, const std::string& variant) {
  const auto cfg = resolve(c);
  const fs::path out(c.out);
  write_resolved(out, cfg);
  const auto rows = corpus::read_manifest(manifest);
  for (double d : cfg.data.durations) {
    std::vector<corpus::ManifestRow> sub;
    for (const auto& r : rows)
      if (r.duration == d) sub.push_back(r);
    if (sub.empty()) {
      log::info("train: no clips at " + duration_name(d) + " s, skipped");
      continue;
    }
    const auto ds = corpus::training_view(corpus::load_samples(sub), cfg.data.degraded_fraction, cfg.seed);
    ModelConfig mc = with_variant(cfg.model, variant);
    mc.in_t = features::expected_frames(d);
    model::Model m(mc, cfg.seed);
    train::FitOptions opts;
    opts.log_csv = out / ("train_log_" + duration_name(d) + ".csv");
    opts.checkpoint = model_path(out, d);
    opts.extra_config = cfg.to_text();
    log::info("train: " + duration_name(d) + " s, variant " + variant);
    const auto res = train::fit(m, ds, cfg.train, opts);
    log::info("train: " + duration_name(d) + " s best epoch " + std::to_string(res.best_epoch) + " val_eer " +
              std::to_string(res.best_val_eer));
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& manifest, const std::string& models, std::size_t rtf_trials) {
  const auto cfg = resolve(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  const auto rows = filter(corpus::read_manifest(manifest), cfg, conditions(c.condition));
  std::vector<eval::ScoredClip> scored;
  std::vector<double> durations;
  std::vector<std::optional<eval::Complexity>> complexity;
  for (double d : cfg.data.durations) {
    std::vector<corpus::ManifestRow> sub;
    for (const auto& r : rows)
      if (r.duration == d) sub.push_back(r);
    if (sub.empty()) continue;
    auto m = model::load_model(model_path(models, d));
    const auto ds = corpus::load_samples(sub);
    const auto s = eval::score_clips(m, ds);
    scored.insert(scored.end(), s.begin(), s.end());
    durations.push_back(d);
    eval::Complexity cx;
    cx.params = model::count_params(m.params);
    cx.gflops = static_cast<double>(model::count_flops(m.cfg, m.cfg.in_t)) * 1e-9;
    cx.rtf = rtf_trials ? eval::measure_rtf(m, d, rtf_trials) : 0.0;
    complexity.emplace_back(cx);
  }
  const auto report = eval::build_report(scored, durations, complexity);
  eval::write_scores(out / "scores.csv", scored);
  eval::write_report(out / "report.csv", report);
  write_resolved(out, cfg);
  std::cout << eval::report_csv(report);
  return 0;
}

int cmd_inspect(const Common& c, const std::string& variant) {
  const auto cfg = resolve(c);
  const ModelConfig base = with_variant(cfg.model, variant);
  std::printf("duration,T,params,FLOPs,GFLOPs\n");
  for (double d : cfg.data.durations) {
    ModelConfig mc = base;
    mc.in_t = features::expected_frames(d);
    mc.validate();
    const model::Model m(mc, cfg.seed);
    const std::size_t flops = model::count_flops(mc, mc.in_t);
    std::printf("%s,%zu,%zu,%zu,%.4f\n", duration_name(d).c_str(), mc.in_t, model::count_params(m.params), flops,
                static_cast<double>(flops) * 1e-9);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-corpus anti-spoofing pipeline"};
  app.require_subcommand(1);
  Common common;
  std::size_t n_per_class = 0, rtf_trials = 10;
  std::string manifest, models, variant = "full";

  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic corpus as WAV files plus manifest.csv");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--n", n_per_class, "clips per class and duration (default from config)");

  auto* degrade_cmd = app.add_subcommand("degrade", "render clean clips under conditions C0..C5");
  add_common(degrade_cmd, common);
  degrade_cmd->add_option("--manifest", manifest, "clean manifest from synth")->required();

  auto* feat_cmd = app.add_subcommand("featurize", "write one SMGT feature tensor per clip");
  add_common(feat_cmd, common);
  feat_cmd->add_option("--manifest", manifest, "audio manifest")->required();

  auto* train_cmd = app.add_subcommand("train", "train one model per duration");
  add_common(train_cmd, common);
  train_cmd->add_option("--manifest", manifest, "feature manifest")->required();
  train_cmd->add_option("--variant", variant, "full, no_mgaa, no_pcem, no_fcem, deep_only, shallow_only");

  auto* eval_cmd = app.add_subcommand("eval", "score clips and write scores.csv and report.csv");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--manifest", manifest, "feature manifest")->required();
  eval_cmd->add_option("--models", models, "directory holding model_<duration>.smgc")->required();
  eval_cmd->add_option("--rtf-trials", rtf_trials, "timed single-clip runs per duration (0 skips RTF)");

  auto* inspect_cmd = app.add_subcommand("inspect", "print per-duration parameter and FLOP counts");
  add_common(inspect_cmd, common, false);
  inspect_cmd->add_option("--variant", variant, "ablation variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    log::set_level(log::level_from_env());
    if (*synth_cmd) return cmd_synth(common, n_per_class);
    if (*degrade_cmd) return cmd_degrade(common, manifest);
    if (*feat_cmd) return cmd_featurize(common, manifest);
    if (*train_cmd) return cmd_train(common, manifest, variant);
    if (*eval_cmd) return cmd_eval(common, manifest, models, rtf_trials);
    if (*inspect_cmd) return cmd_inspect(common, variant);
  } catch (const Error& e) {
    std::fprintf(stderr, "smgaa: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "smgaa: %s\n", e.what());
    return 2;
  }
  return 2;
}
