//===- fixprint.cpp - command-line driver --------------------------------====//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/pipeline.hpp"
#include "fixprint/util.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

using fixprint::Error;
using fixprint::pipeline::RunConfig;
using fixprint::pipeline::StageResult;

namespace {

// --config gives defaults; explicit flags win.
void apply_config_file(const std::string &path, RunConfig &cfg) {
  nlohmann::json j = nlohmann::json::parse(fixprint::read_file(path), nullptr, false);
  if (j.is_discarded())
    throw Error("config file is not valid JSON: " + path);
  if (j.contains("manifest")) cfg.manifest = j["manifest"].get<std::string>();
  if (j.contains("corpus")) cfg.corpus_root = j["corpus"].get<std::string>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("snapshots")) cfg.snapshots_dir = j["snapshots"].get<std::string>();
  if (j.contains("scan_snapshot")) cfg.scan_snapshot = j["scan_snapshot"].get<std::string>();
  if (j.contains("grammar")) cfg.grammar_id = j["grammar"].get<std::string>();
  if (j.contains("min_height")) cfg.match.min_height = j["min_height"].get<int>();
  if (j.contains("dice_threshold")) cfg.match.dice_threshold = j["dice_threshold"].get<double>();
  if (j.contains("level")) {
    auto l = fixprint::pattern::abstraction_level_from_string(j["level"].get<std::string>());
    if (!l)
      throw Error("config: unknown abstraction level");
    cfg.level = *l;
  }
  if (j.contains("theta")) cfg.cluster_theta = j["theta"].get<double>();
  if (j.contains("k")) cfg.detect_k = j["k"].get<int>();
  if (j.contains("workers")) cfg.workers = j["workers"].get<unsigned>();
}

void print_stage(const StageResult &s) {
  std::printf("%-8s %ld processed", s.stage.c_str(), s.processed);
  if (s.skipped)
    std::printf(", %ld skipped", s.skipped);
  if (s.failed)
    std::printf(", %ld FAILED", s.failed);
  std::printf("\n");
  for (const std::string &n : s.notes)
    std::printf("  note: %s\n", n.c_str());
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"fix-pattern mining and incomplete-fix detection toolkit"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file;
  std::string level_name = "identifiers_and_literals";

  app.add_option("--config", config_file, "JSON config file (defaults; flags override)");

  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--corpus", cfg.corpus_root, "corpus store directory");
    cmd->add_option("--out", cfg.out_dir, "artifact output directory");
    cmd->add_option("--grammar", cfg.grammar_id, "grammar front-end id");
    cmd->add_option("--min-height", cfg.match.min_height,
                    "phase-1 minimum subtree height");
    cmd->add_option("--dice", cfg.match.dice_threshold,
                    "phase-2 container similarity threshold");
    cmd->add_option("--level", level_name,
                    "abstraction level: none|literals|identifiers_and_literals");
    cmd->add_option("--theta", cfg.cluster_theta, "cluster similarity threshold");
    cmd->add_option("--k", cfg.detect_k, "repeated-site detection threshold");
    cmd->add_option("--workers", cfg.workers, "worker threads (merges stay deterministic)");
  };

  CLI::App *ingest = app.add_subcommand("ingest", "split manifest commits into the patch store");
  ingest->add_option("--manifest", cfg.manifest, "JSON-lines manifest")->required();
  ingest->add_option("--snapshots", cfg.snapshots_dir,
                     "snapshot source: <dir>/<commit>/{before,after}/<path>");
  add_common(ingest);

  CLI::App *mine = app.add_subcommand("mine", "extract patterns and fingerprints per fine-grained patch");
  add_common(mine);

  CLI::App *cluster_cmd = app.add_subcommand("cluster", "group fingerprints and link similar patterns");
  add_common(cluster_cmd);

  CLI::App *detect_cmd = app.add_subcommand("detect", "build per-CVE graphs and flag repeated fingerprints");
  add_common(detect_cmd);

  CLI::App *scan = app.add_subcommand("scan", "search a snapshot for anchor-matching unpatched sites");
  scan->add_option("--snapshot", cfg.scan_snapshot, "code tree to scan")->required();
  add_common(scan);

  CLI::App *stats_cmd = app.add_subcommand("stats", "patch characteristics: per-record CSV and aggregate JSON");
  stats_cmd->add_option("--manifest", cfg.manifest, "JSON-lines manifest")->required();
  add_common(stats_cmd);

  CLI::App *report = app.add_subcommand("report", "render candidate/omission reports as text");
  add_common(report);

  CLI::App *run = app.add_subcommand("run", "full pipeline: ingest through report");
  run->add_option("--manifest", cfg.manifest, "JSON-lines manifest")->required();
  run->add_option("--snapshots", cfg.snapshots_dir, "snapshot source directory");
  run->add_option("--snapshot", cfg.scan_snapshot, "code tree to scan for omissions");
  add_common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_file.empty()) {
      // Precedence: start from file config, overlay any flag that differs
      // from its built-in default.
      RunConfig file_cfg;
      apply_config_file(config_file, file_cfg);
      RunConfig flag_defaults;
      RunConfig merged = file_cfg;
      if (!cfg.manifest.empty()) merged.manifest = cfg.manifest;
      if (!cfg.corpus_root.empty()) merged.corpus_root = cfg.corpus_root;
      if (!cfg.out_dir.empty()) merged.out_dir = cfg.out_dir;
      if (!cfg.snapshots_dir.empty()) merged.snapshots_dir = cfg.snapshots_dir;
      if (!cfg.scan_snapshot.empty()) merged.scan_snapshot = cfg.scan_snapshot;
      if (cfg.grammar_id != flag_defaults.grammar_id) merged.grammar_id = cfg.grammar_id;
      if (cfg.match.min_height != flag_defaults.match.min_height)
        merged.match.min_height = cfg.match.min_height;
      if (cfg.match.dice_threshold != flag_defaults.match.dice_threshold)
        merged.match.dice_threshold = cfg.match.dice_threshold;
      if (cfg.cluster_theta != flag_defaults.cluster_theta)
        merged.cluster_theta = cfg.cluster_theta;
      if (cfg.detect_k != flag_defaults.detect_k) merged.detect_k = cfg.detect_k;
      if (cfg.workers != flag_defaults.workers) merged.workers = cfg.workers;
      cfg = merged;
    }
    auto level = fixprint::pattern::abstraction_level_from_string(level_name);
    if (!level) {
      std::fprintf(stderr, "error: unknown abstraction level '%s'\n", level_name.c_str());
      return 2;
    }
    cfg.level = *level;
    if (cfg.corpus_root.empty())
      cfg.corpus_root = "corpus";
    if (cfg.out_dir.empty())
      cfg.out_dir = "out";
    fixprint::pipeline::validate(cfg);

    int rc = 0;
    auto run_stage = [&](const std::function<StageResult(const RunConfig &)> &stage) {
      StageResult s = stage(cfg);
      print_stage(s);
      if (!s.ok())
        rc = 1;
    };

    if (ingest->parsed())
      run_stage(fixprint::pipeline::stage_ingest);
    else if (mine->parsed())
      run_stage(fixprint::pipeline::stage_mine);
    else if (cluster_cmd->parsed())
      run_stage(fixprint::pipeline::stage_cluster);
    else if (detect_cmd->parsed())
      run_stage(fixprint::pipeline::stage_detect);
    else if (scan->parsed())
      run_stage(fixprint::pipeline::stage_scan);
    else if (stats_cmd->parsed())
      run_stage(fixprint::pipeline::stage_stats);
    else if (report->parsed())
      run_stage(fixprint::pipeline::stage_report);
    else if (run->parsed()) {
      fixprint::pipeline::PipelineResult result = fixprint::pipeline::run_pipeline(cfg);
      std::fputs(result.summary().c_str(), stdout);
      rc = result.exit_code;
    }
    return rc;
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
