//===- stats.cpp - patch characteristics metrics ------------------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/stats.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fixprint::stats {

using nlohmann::json;

DiffStat diffstat(std::string_view diff_text) {
  DiffStat s;
  s.patch_bytes = static_cast<long>(diff_text.size());
  std::vector<diff::FileDiff> files = diff::parse_unified_diff(diff_text);
  s.files_modified = static_cast<long>(files.size());

  for (const diff::FileDiff &f : files) {
    for (const diff::Hunk &h : f.hunks) {
      long removed_run = 0, added_run = 0;
      auto flush = [&] {
        long paired = std::min(removed_run, added_run);
        s.loc_modified += paired;
        s.loc_deleted += removed_run - paired;
        s.loc_added += added_run - paired;
        removed_run = added_run = 0;
      };
      for (const diff::DiffLine &l : h.lines) {
        switch (l.tag) {
        case diff::LineTag::Removed:
          if (added_run > 0)
            flush(); // a new removed run after adds starts a fresh pairing
          ++removed_run;
          break;
        case diff::LineTag::Added:
          ++added_run;
          break;
        case diff::LineTag::Context:
          flush();
          break;
        }
      }
      flush();
    }
  }
  return s;
}

DiffStat diffstat(const corpus::FixEvent &event) { return diffstat(event.diff_text); }

long interval_days(const corpus::FixEvent &fix0, const corpus::FixEvent &fix1) {
  std::int64_t d0 = corpus::civil_days(fix0.commit_date);
  std::int64_t d1 = corpus::civil_days(fix1.commit_date);
  if (d1 < d0)
    throw Error("negative fix interval: " + fix0.commit_date + " .. " +
                fix1.commit_date);
  return static_cast<long>(d1 - d0);
}

namespace {

MetricStats metric_stats(const std::vector<long> &values) {
  MetricStats m;
  if (values.empty())
    return m;
  double sum = 0;
  for (long v : values)
    sum += static_cast<double>(v);
  m.mean = sum / static_cast<double>(values.size());
  double sq = 0;
  for (long v : values) {
    double d = static_cast<double>(v) - m.mean;
    sq += d * d;
  }
  m.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return m;
}

} // namespace

AggregateTable aggregate(const std::vector<corpus::CveRecord> &records) {
  AggregateTable table;

  // Sorted working copy: output is invariant under input permutation.
  std::vector<const corpus::CveRecord *> sorted;
  sorted.reserve(records.size());
  for (const auto &r : records)
    sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const corpus::CveRecord *a, const corpus::CveRecord *b) {
              return a->cve_id < b->cve_id;
            });

  struct Column {
    std::vector<long> files, added, deleted, modified, bytes;
  };
  std::map<std::size_t, Column> columns; // fix index -> metric values
  std::map<std::string, long> annual;
  std::map<std::string, long> types;

  for (const corpus::CveRecord *r : sorted) {
    std::vector<DiffStat> per_fix;
    bool ok = true;
    std::string reason;
    for (const corpus::FixEvent &e : r->fixes) {
      try {
        corpus::civil_days(e.commit_date);
        per_fix.push_back(diffstat(e));
      } catch (const Error &err) {
        ok = false;
        reason = err.what();
        break;
      }
    }
    if (!ok) {
      table.skipped.push_back(r->cve_id + ": " + reason);
      continue;
    }

    for (std::size_t i = 0; i < per_fix.size(); ++i) {
      Column &c = columns[i];
      c.files.push_back(per_fix[i].files_modified);
      c.added.push_back(per_fix[i].loc_added);
      c.deleted.push_back(per_fix[i].loc_deleted);
      c.modified.push_back(per_fix[i].loc_modified);
      c.bytes.push_back(per_fix[i].patch_bytes);
    }
    annual[r->fixes[0].commit_date.substr(0, 4)] += 1;
    types[r->vuln_type] += 1;
    if (r->fixes.size() >= 2)
      table.intervals.emplace_back(r->cve_id,
                                   interval_days(r->fixes[0], r->fixes[1]));
  }

  for (const auto &[idx, col] : columns) {
    AggregateRow row;
    row.which = "Fix-" + std::to_string(idx);
    row.population = static_cast<long>(col.files.size());
    row.files = metric_stats(col.files);
    row.added = metric_stats(col.added);
    row.deleted = metric_stats(col.deleted);
    row.modified = metric_stats(col.modified);
    row.bytes = metric_stats(col.bytes);
    table.rows.push_back(std::move(row));
  }

  for (const auto &[year, count] : annual)
    table.annual.buckets.emplace_back(year, count);

  std::vector<std::pair<std::string, long>> typev(types.begin(), types.end());
  std::sort(typev.begin(), typev.end(), [](const auto &a, const auto &b) {
    if (a.second != b.second)
      return a.second > b.second;
    return a.first < b.first;
  });
  table.types.buckets = std::move(typev);
  return table;
}

std::string per_record_csv(const std::vector<corpus::CveRecord> &records) {
  std::vector<const corpus::CveRecord *> sorted;
  for (const auto &r : records)
    sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const corpus::CveRecord *a, const corpus::CveRecord *b) {
              return a->cve_id < b->cve_id;
            });

  std::ostringstream out;
  out << "cve_id,fix_index,commit_hash,commit_date,vuln_type,files_modified,"
         "loc_added,loc_deleted,loc_modified,patch_bytes,days_since_fix0\n";
  for (const corpus::CveRecord *r : sorted) {
    for (std::size_t i = 0; i < r->fixes.size(); ++i) {
      const corpus::FixEvent &e = r->fixes[i];
      DiffStat d;
      long days = -1;
      try {
        d = diffstat(e);
        days = interval_days(r->fixes[0], e);
      } catch (const Error &) {
        continue; // skipped records are reported by aggregate()
      }
      out << r->cve_id << ',' << i << ',' << e.commit_hash << ',' << e.commit_date
          << ',' << r->vuln_type << ',' << d.files_modified << ',' << d.loc_added
          << ',' << d.loc_deleted << ',' << d.loc_modified << ',' << d.patch_bytes
          << ',' << days << '\n';
    }
  }
  return out.str();
}

namespace {

json metric_json(const MetricStats &m) {
  json j;
  j["mean"] = m.mean;
  j["std"] = m.stddev;
  return j;
}

} // namespace

std::string aggregate_to_json(const AggregateTable &table) {
  json j;
  json rows = json::array();
  for (const AggregateRow &r : table.rows) {
    json row;
    row["which"] = r.which;
    row["population"] = r.population;
    row["modified_files"] = metric_json(r.files);
    row["added_loc"] = metric_json(r.added);
    row["deleted_loc"] = metric_json(r.deleted);
    row["modified_loc"] = metric_json(r.modified);
    row["patch_bytes"] = metric_json(r.bytes);
    rows.push_back(std::move(row));
  }
  j["table"] = std::move(rows);

  json annual = json::array();
  for (const auto &[label, count] : table.annual.buckets)
    annual.push_back({{"year", label}, {"count", count}});
  j["annual"] = std::move(annual);

  json types = json::array();
  for (const auto &[label, count] : table.types.buckets)
    types.push_back({{"type", label}, {"count", count}});
  j["types"] = std::move(types);

  json intervals = json::array();
  for (const auto &[cve, days] : table.intervals)
    intervals.push_back({{"cve_id", cve}, {"days", days}});
  j["intervals"] = std::move(intervals);

  j["skipped"] = table.skipped;
  return j.dump(2) + "\n";
}

} // namespace fixprint::stats
