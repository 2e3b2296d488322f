//===- corpus.hpp - CVE fix manifests and the on-disk patch store -*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_CORPUS_HPP
#define FIXPRINT_CORPUS_HPP

#include "fixprint/diff.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fixprint::corpus {

struct RootCauseLabel {
  enum class Phase { PreFixMisled, InFixMissingSimilar, PostFixSemanticError };
  enum class Sublevel { Variable, Function, Resource, AccessControl };

  Phase phase = Phase::PreFixMisled;
  std::optional<Sublevel> sublevel; // present iff phase == PostFixSemanticError

  friend bool operator==(const RootCauseLabel &, const RootCauseLabel &) = default;
};

std::string to_string(RootCauseLabel::Phase phase);
std::string to_string(RootCauseLabel::Sublevel sublevel);

struct FixEvent {
  std::string commit_hash;
  std::string commit_date;    // ISO-8601 date, UTC day granularity
  std::string associated_cve; // CVE id of the follow-up fix itself, or empty
  std::string diff_text;
  std::vector<std::string> touched_files;

  friend bool operator==(const FixEvent &, const FixEvent &) = default;
};

struct CveRecord {
  std::string cve_id;
  std::string vuln_type;
  std::optional<RootCauseLabel> root_cause;
  std::string description;
  std::vector<FixEvent> fixes; // index 0 is the initial fix

  friend bool operator==(const CveRecord &, const CveRecord &) = default;
};

/// One (commit, file) unit with full snapshots on both sides.
struct FineGrainedPatch {
  std::string cve_id;
  std::string commit_hash;
  std::string file_path;
  std::string before_text; // empty for file creation
  std::string after_text;  // empty for file deletion
  std::vector<diff::Hunk> hunks;
  std::string diff_slice; // the per-file section of the commit diff
};

bool valid_cve_id(std::string_view id);

/// Days since 1970-01-01 of an ISO date; throws Error on malformed input.
std::int64_t civil_days(std::string_view iso_date);

/// Reads a JSON-lines manifest, one CVE per line, resolving diff_path entries
/// relative to the manifest's directory. Errors name the offending line.
std::vector<CveRecord> load_manifest(const std::filesystem::path &path);

/// Parses manifest content directly; `base_dir` resolves diff_path entries.
std::vector<CveRecord> parse_manifest(std::string_view content,
                                      const std::filesystem::path &base_dir);

/// Parses a single manifest line; lets callers isolate per-CVE failures
/// instead of failing the whole file.
CveRecord parse_manifest_line(std::string_view line,
                              const std::filesystem::path &base_dir,
                              std::size_t line_no);

/// Inverse of load_manifest with all diffs inlined; load(write(x)) == x.
std::string manifest_to_jsonl(const std::vector<CveRecord> &records);

struct SnapshotSource {
  std::map<std::string, std::string> before; // file path -> full content
  std::map<std::string, std::string> after;
};

struct SplitResult {
  std::vector<FineGrainedPatch> patches;
  std::vector<std::string> warnings; // e.g. skipped binary files
};

/// Splits one commit into per-file patches. A missing side of a snapshot is
/// reconstructed through the hunks from the other side; a file with neither
/// side available (and not a pure creation/deletion) is an error, as is any
/// hunk that does not take before_text to after_text exactly.
SplitResult split_patch(const std::string &cve_id, const FixEvent &event,
                        const SnapshotSource &snapshots);

/// Slash-free directory name for a repository path ("/" becomes "__").
std::string encode_store_path(std::string_view file_path);

struct StoreEntry {
  std::string cve_id;
  std::string commit_hash;
  std::string file_path;
  std::string dir; // corpus-root-relative

  friend bool operator==(const StoreEntry &, const StoreEntry &) = default;
};

struct StoreResult {
  std::vector<StoreEntry> entries; // full index after the call, sorted
  std::size_t files_written = 0;   // zero on an idempotent re-run
};

/// Lays patches out as <root>/<cve>/<commit>/<encoded-path>/{before,after,diff}
/// and maintains <root>/index.json. Two patches mapping to one directory is an
/// error. Byte-identical re-runs write nothing.
StoreResult store_corpus(const std::vector<FineGrainedPatch> &patches,
                         const std::filesystem::path &root);

std::vector<StoreEntry> load_store_index(const std::filesystem::path &root);

} // namespace fixprint::corpus

#endif // FIXPRINT_CORPUS_HPP
