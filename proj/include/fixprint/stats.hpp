//===- stats.hpp - patch characteristics metrics ----------------*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_STATS_HPP
#define FIXPRINT_STATS_HPP

#include "fixprint/corpus.hpp"

#include <string>
#include <vector>

namespace fixprint::stats {

/// diffstat-style metrics for one commit diff. Within a hunk, a run of
/// removed lines pairs with the run of added lines that directly follows it:
/// min(run-, run+) lines count as modified, the remainders as deleted and
/// added. patch_bytes is the byte length of the diff text itself.
struct DiffStat {
  long files_modified = 0;
  long loc_added = 0;
  long loc_deleted = 0;
  long loc_modified = 0;
  long patch_bytes = 0;

  friend bool operator==(const DiffStat &, const DiffStat &) = default;
};

DiffStat diffstat(std::string_view diff_text);
DiffStat diffstat(const corpus::FixEvent &event);

/// Whole-day difference of the two UTC commit dates; negative -> Error.
long interval_days(const corpus::FixEvent &fix0, const corpus::FixEvent &fix1);

struct MetricStats {
  double mean = 0;
  double stddev = 0; // population convention (divide by N)
};

struct AggregateRow {
  std::string which; // "Fix-0", "Fix-1", ...
  long population = 0;
  MetricStats files, added, deleted, modified, bytes;
};

struct Histogram {
  std::vector<std::pair<std::string, long>> buckets;
};

struct AggregateTable {
  std::vector<AggregateRow> rows;
  Histogram annual; // by Fix-0 commit year, ascending
  Histogram types;  // by vuln_type, descending count then name
  std::vector<std::pair<std::string, long>> intervals; // cve_id -> Fix-0..Fix-1 days
  std::vector<std::string> skipped; // records excluded, with reasons
};

/// Characterizes the whole corpus. Records whose events fail to parse are
/// skipped (with a reason), never fatal.
AggregateTable aggregate(const std::vector<corpus::CveRecord> &records);

/// One CSV row per (record, fix index) with all metrics; stable ordering.
std::string per_record_csv(const std::vector<corpus::CveRecord> &records);

std::string aggregate_to_json(const AggregateTable &table);

} // namespace fixprint::stats

#endif // FIXPRINT_STATS_HPP
