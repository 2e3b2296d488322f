//===- pipeline.hpp - staged mining/detection pipeline ----------*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// ingest -> mine -> cluster -> detect -> scan -> stats -> report. Every stage
// reads the previous stage's on-disk artifacts, so stages can be rerun
// independently; identical inputs and config produce byte-identical artifacts
// at any worker count.
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_PIPELINE_HPP
#define FIXPRINT_PIPELINE_HPP

#include "fixprint/pattern.hpp"
#include "fixprint/treediff.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fixprint::pipeline {

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path corpus_root; // patch store written by ingest
  std::filesystem::path out_dir;     // everything else
  std::filesystem::path snapshots_dir; // optional: <dir>/<commit>/{before,after}/<path>
  std::filesystem::path scan_snapshot; // optional: code tree scanned for omissions

  std::string grammar_id = syntax::kGrammarCSubset;
  treediff::MatchConfig match;
  pattern::AbstractionLevel level = pattern::AbstractionLevel::IdentifiersAndLiterals;
  double cluster_theta = 0.8;
  int detect_k = 2;
  unsigned workers = 1;
};

/// Throws Error when a threshold is out of its documented range.
void validate(const RunConfig &cfg);

struct StageResult {
  std::string stage;
  long processed = 0;
  long skipped = 0;
  long failed = 0;
  std::vector<std::string> notes;

  bool ok() const { return failed == 0; }
};

StageResult stage_ingest(const RunConfig &cfg);
StageResult stage_mine(const RunConfig &cfg);
StageResult stage_cluster(const RunConfig &cfg);
StageResult stage_detect(const RunConfig &cfg);
StageResult stage_scan(const RunConfig &cfg);
StageResult stage_stats(const RunConfig &cfg);
StageResult stage_report(const RunConfig &cfg);

struct PipelineResult {
  std::vector<StageResult> stages;
  int exit_code = 0; // 0 success, 1 partial failure
  std::string summary() const;
};

/// All stages in order; scan only when a snapshot tree is configured.
PipelineResult run_pipeline(const RunConfig &cfg);

} // namespace fixprint::pipeline

#endif // FIXPRINT_PIPELINE_HPP
