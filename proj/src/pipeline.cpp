//===- pipeline.cpp - staged mining/detection pipeline ------------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/pipeline.hpp"

#include "fixprint/corpus.hpp"
#include "fixprint/detect.hpp"
#include "fixprint/stats.hpp"
#include "fixprint/util.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fixprint::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

void validate(const RunConfig &cfg) {
  if (!syntax::grammar_registered(cfg.grammar_id))
    throw Error("unknown grammar_id: " + cfg.grammar_id);
  if (cfg.match.min_height < 1)
    throw Error("min_height must be >= 1");
  if (cfg.match.dice_threshold < 0.0 || cfg.match.dice_threshold > 1.0)
    throw Error("dice_threshold must be in [0,1]");
  if (cfg.cluster_theta < 0.0 || cfg.cluster_theta > 1.0)
    throw Error("cluster threshold must be in [0,1]");
  if (cfg.detect_k < 2)
    throw Error("detection threshold k must be >= 2");
  if (cfg.workers < 1)
    throw Error("worker count must be >= 1");
}

namespace {

void write_failure_marker(const fs::path &out_dir, const std::string &stage,
                          const json &failures) {
  fs::path marker = out_dir / (stage + ".failed.json");
  if (failures.empty()) {
    std::error_code ec;
    fs::remove(marker, ec);
    return;
  }
  write_file_if_changed(marker, failures.dump(2) + "\n");
}

json load_json_file(const fs::path &p) {
  json j = json::parse(read_file(p), nullptr, false);
  if (j.is_discarded())
    throw Error("malformed JSON artifact: " + p.string());
  return j;
}

struct MineRecord {
  std::string cve_id;
  std::string commit_hash;
  std::string file_path;
  std::string function_name;
  std::string level;
  std::string digest;
  std::string canonical;
};

std::vector<MineRecord> load_fingerprints(const fs::path &out_dir) {
  fs::path p = out_dir / "fingerprints.jsonl";
  std::vector<MineRecord> out;
  if (!fs::exists(p))
    return out;
  std::size_t line_no = 0;
  for (const std::string &line : split_lines(read_file(p))) {
    ++line_no;
    if (line.empty())
      continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error("fingerprints.jsonl line " + std::to_string(line_no) +
                  ": malformed JSON");
    MineRecord r;
    r.cve_id = j.value("cve_id", "");
    r.commit_hash = j.value("commit_hash", "");
    r.file_path = j.value("file_path", "");
    r.function_name = j.value("function", "");
    r.level = j.value("level", "");
    r.digest = j.value("digest", "");
    r.canonical = j.value("canonical", "");
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace

//===----------------------------------------------------------------------===//
// ingest
//===----------------------------------------------------------------------===//

StageResult stage_ingest(const RunConfig &cfg) {
  StageResult res{"ingest"};
  std::string content = read_file(cfg.manifest);
  fs::path base_dir = cfg.manifest.parent_path();

  std::vector<corpus::CveRecord> records;
  json failures = json::array();
  std::set<std::string> seen;

  std::size_t line_no = 0;
  for (const std::string &line : split_lines(content)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      corpus::CveRecord r = corpus::parse_manifest_line(line, base_dir, line_no);
      if (!seen.insert(r.cve_id).second)
        throw Error("duplicate cve_id " + r.cve_id);
      records.push_back(std::move(r));
    } catch (const Error &e) {
      ++res.failed;
      failures.push_back({{"line", line_no}, {"error", e.what()}});
      res.notes.push_back(e.what());
    }
  }

  std::vector<corpus::FineGrainedPatch> all_patches;
  std::vector<corpus::CveRecord> stored_records;
  for (corpus::CveRecord &r : records) {
    try {
      std::vector<corpus::FineGrainedPatch> record_patches;
      for (const corpus::FixEvent &e : r.fixes) {
        corpus::SnapshotSource snaps;
        if (!cfg.snapshots_dir.empty()) {
          for (const std::string &path : e.touched_files) {
            fs::path b = cfg.snapshots_dir / e.commit_hash / "before" / path;
            fs::path a = cfg.snapshots_dir / e.commit_hash / "after" / path;
            if (fs::exists(b))
              snaps.before[path] = read_file(b);
            if (fs::exists(a))
              snaps.after[path] = read_file(a);
          }
        }
        corpus::SplitResult split = corpus::split_patch(r.cve_id, e, snaps);
        for (std::string &w : split.warnings)
          res.notes.push_back(std::move(w));
        for (auto &p : split.patches)
          record_patches.push_back(std::move(p));
      }
      for (auto &p : record_patches)
        all_patches.push_back(std::move(p));
      stored_records.push_back(std::move(r));
      ++res.processed;
    } catch (const Error &e) {
      ++res.failed;
      failures.push_back({{"cve_id", r.cve_id}, {"error", e.what()}});
      res.notes.push_back(r.cve_id + ": " + e.what());
    }
  }

  corpus::store_corpus(all_patches, cfg.corpus_root);
  // Normalized manifest copy (diffs inlined) for the later stages.
  std::sort(stored_records.begin(), stored_records.end(),
            [](const corpus::CveRecord &a, const corpus::CveRecord &b) {
              return a.cve_id < b.cve_id;
            });
  write_file_if_changed(cfg.corpus_root / "manifest.jsonl",
                        corpus::manifest_to_jsonl(stored_records));
  fs::create_directories(cfg.out_dir);
  write_failure_marker(cfg.out_dir, "ingest", failures);
  return res;
}

//===----------------------------------------------------------------------===//
// mine
//===----------------------------------------------------------------------===//

namespace {

struct MineOutcome {
  std::optional<MineRecord> record;
  std::optional<detect::ExtractionFailure> failure;
  std::string cve_id;
};

MineOutcome mine_one(const RunConfig &cfg, const corpus::StoreEntry &entry,
                     const fs::path &root) {
  MineOutcome out;
  out.cve_id = entry.cve_id;
  fs::path dir = root / entry.dir;
  std::string before_text = read_file(dir / "before");
  std::string after_text = read_file(dir / "after");

  if (looks_binary(before_text) || looks_binary(after_text)) {
    out.failure = detect::ExtractionFailure{entry.file_path, "binary content"};
    return out;
  }

  syntax::SyntaxTree before = syntax::parse_source(before_text, cfg.grammar_id);
  syntax::SyntaxTree after = syntax::parse_source(after_text, cfg.grammar_id);
  treediff::Mapping mapping = treediff::match_trees(before, after, cfg.match);
  treediff::EditScript script = treediff::edit_script(before, after, mapping);
  if (script.empty()) {
    out.failure = detect::ExtractionFailure{entry.file_path,
                                            "no structural change in parsed trees"};
    return out;
  }
  pattern::RichEditScript rich = pattern::enrich(script, before, after, mapping);
  pattern::FixPattern pat = pattern::abstract(rich, cfg.level);
  pattern::Fingerprint fp = pattern::fingerprint(pat);

  // Site attribution: the single enclosing function of all actions, if any.
  std::set<std::pair<int, syntax::NodeId>> fns;
  std::optional<std::pair<const syntax::SyntaxTree *, syntax::NodeId>> fn_instance;
  for (const pattern::RichAction &ra : rich.actions) {
    const syntax::SyntaxTree &t =
        ra.site.side == treediff::Side::Before ? before : after;
    syntax::NodeId fn = syntax::enclosing_function(t, ra.site.id);
    if (fn == syntax::kInvalidNode) {
      fns.insert({-1, syntax::kInvalidNode});
      continue;
    }
    // Canonicalize through the mapping so the same function seen from both
    // trees counts once.
    int side = ra.site.side == treediff::Side::Before ? 0 : 1;
    syntax::NodeId key = fn;
    if (side == 1) {
      syntax::NodeId b = mapping.src_of(fn);
      if (b != syntax::kInvalidNode) {
        side = 0;
        key = b;
      }
    }
    fns.insert({side, key});
    fn_instance = {side == 0 ? &before : &after, key};
  }
  std::string function_name;
  if (fns.size() == 1 && fn_instance && fns.begin()->first != -1)
    function_name = syntax::function_name(*fn_instance->first, fn_instance->second);

  MineRecord r;
  r.cve_id = entry.cve_id;
  r.commit_hash = entry.commit_hash;
  r.file_path = entry.file_path;
  r.function_name = function_name;
  r.level = pattern::to_string(cfg.level);
  r.digest = fp.digest.hex();
  r.canonical = fp.canonical;
  out.record = std::move(r);
  return out;
}

} // namespace

StageResult stage_mine(const RunConfig &cfg) {
  StageResult res{"mine"};

  // Fix-0 commits per CVE from the normalized manifest.
  std::map<std::string, std::string> fix0;
  fs::path manifest_copy = cfg.corpus_root / "manifest.jsonl";
  if (fs::exists(manifest_copy))
    for (const corpus::CveRecord &r : corpus::load_manifest(manifest_copy))
      fix0[r.cve_id] = r.fixes.front().commit_hash;

  std::vector<corpus::StoreEntry> index = corpus::load_store_index(cfg.corpus_root);
  std::vector<corpus::StoreEntry> targets;
  for (corpus::StoreEntry &e : index) {
    auto it = fix0.find(e.cve_id);
    if (it == fix0.end() || it->second != e.commit_hash) {
      ++res.skipped; // later fixes in the chain are stored but not mined
      continue;
    }
    targets.push_back(std::move(e));
  }
  std::sort(targets.begin(), targets.end(),
            [](const corpus::StoreEntry &a, const corpus::StoreEntry &b) {
              return std::tie(a.cve_id, a.commit_hash, a.file_path) <
                     std::tie(b.cve_id, b.commit_hash, b.file_path);
            });

  std::vector<MineOutcome> outcomes(targets.size());
  std::vector<std::string> errors(targets.size());
  parallel_for(targets.size(), cfg.workers, [&](std::size_t i) {
    try {
      outcomes[i] = mine_one(cfg, targets[i], cfg.corpus_root);
    } catch (const Error &e) {
      outcomes[i].cve_id = targets[i].cve_id;
      errors[i] = e.what();
    } catch (const std::exception &e) {
      outcomes[i].cve_id = targets[i].cve_id;
      errors[i] = e.what();
    }
  });

  std::string jsonl;
  json failures = json::array();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!errors[i].empty()) {
      ++res.failed;
      failures.push_back({{"cve_id", targets[i].cve_id},
                          {"file_path", targets[i].file_path},
                          {"reason", errors[i]}});
      res.notes.push_back(targets[i].file_path + ": " + errors[i]);
      continue;
    }
    const MineOutcome &o = outcomes[i];
    if (o.failure) {
      ++res.skipped;
      failures.push_back({{"cve_id", o.cve_id},
                          {"file_path", o.failure->file_path},
                          {"reason", o.failure->reason}});
      res.notes.push_back(o.failure->file_path + ": " + o.failure->reason);
      continue;
    }
    ++res.processed;
    json j;
    j["cve_id"] = o.record->cve_id;
    j["commit_hash"] = o.record->commit_hash;
    j["file_path"] = o.record->file_path;
    j["function"] = o.record->function_name;
    j["level"] = o.record->level;
    j["digest"] = o.record->digest;
    j["canonical"] = o.record->canonical;
    jsonl += j.dump();
    jsonl += '\n';
  }

  fs::create_directories(cfg.out_dir);
  write_file_if_changed(cfg.out_dir / "fingerprints.jsonl", jsonl);
  write_failure_marker(cfg.out_dir, "mine", failures);
  return res;
}

//===----------------------------------------------------------------------===//
// cluster
//===----------------------------------------------------------------------===//

StageResult stage_cluster(const RunConfig &cfg) {
  StageResult res{"cluster"};
  std::vector<MineRecord> records = load_fingerprints(cfg.out_dir);

  std::vector<std::pair<pattern::Provenance, pattern::FixPattern>> input;
  for (const MineRecord &r : records) {
    pattern::FixPattern p;
    p.shape = pattern::shape_from_canonical(r.canonical);
    p.level = pattern::abstraction_level_from_string(r.level)
                  .value_or(pattern::AbstractionLevel::IdentifiersAndLiterals);
    input.emplace_back(pattern::Provenance{r.cve_id, r.commit_hash, r.file_path,
                                           r.function_name},
                       std::move(p));
  }
  std::vector<pattern::PatternCluster> clusters =
      input.empty() ? std::vector<pattern::PatternCluster>{}
                    : pattern::cluster(input, cfg.cluster_theta);
  res.processed = static_cast<long>(clusters.size());

  json arr = json::array();
  for (const pattern::PatternCluster &c : clusters) {
    json j;
    j["representative"] = c.representative.digest.hex();
    j["canonical"] = c.representative.canonical;
    j["level"] = pattern::to_string(c.level);
    j["member_count"] = c.members.size();
    json members = json::array();
    for (const auto &[prov, fp] : c.members)
      members.push_back({{"cve_id", prov.cve_id},
                         {"commit_hash", prov.commit_hash},
                         {"file_path", prov.file_path},
                         {"function", prov.function_name}});
    j["members"] = std::move(members);
    json links = json::array();
    for (const pattern::ClusterLink &l : c.links)
      links.push_back({{"from", l.from_digest}, {"to", l.to_digest}, {"score", l.score}});
    j["links"] = std::move(links);
    arr.push_back(std::move(j));
  }
  fs::create_directories(cfg.out_dir);
  write_file_if_changed(cfg.out_dir / "clusters.json", arr.dump(2) + "\n");
  return res;
}

//===----------------------------------------------------------------------===//
// detect
//===----------------------------------------------------------------------===//

StageResult stage_detect(const RunConfig &cfg) {
  StageResult res{"detect"};
  std::vector<MineRecord> records = load_fingerprints(cfg.out_dir);

  std::map<std::string, std::vector<detect::ExtractedPattern>> by_cve;
  for (const MineRecord &r : records) {
    detect::ExtractedPattern e;
    e.prov = pattern::Provenance{r.cve_id, r.commit_hash, r.file_path, r.function_name};
    e.pat.level = pattern::abstraction_level_from_string(r.level)
                      .value_or(pattern::AbstractionLevel::IdentifiersAndLiterals);
    e.fp.canonical = r.canonical;
    e.fp.digest = digest_bytes(r.canonical);
    by_cve[r.cve_id].push_back(std::move(e));
  }

  // Extraction failures recorded by mine belong in the graphs.
  std::map<std::string, std::vector<detect::ExtractionFailure>> failures_by_cve;
  fs::path mine_marker = cfg.out_dir / "mine.failed.json";
  if (fs::exists(mine_marker)) {
    for (const json &f : load_json_file(mine_marker))
      failures_by_cve[f.value("cve_id", "")].push_back(
          detect::ExtractionFailure{f.value("file_path", ""), f.value("reason", "")});
  }

  std::vector<detect::FixPatternGraph> graphs;
  for (auto &[cve, entries] : by_cve)
    graphs.push_back(detect::build_graph(cve, entries, failures_by_cve[cve]));
  for (auto &[cve, fails] : failures_by_cve)
    if (!by_cve.count(cve) && !cve.empty())
      graphs.push_back(detect::build_graph(cve, {}, fails));
  std::sort(graphs.begin(), graphs.end(),
            [](const detect::FixPatternGraph &a, const detect::FixPatternGraph &b) {
              return a.cve_id < b.cve_id;
            });

  std::vector<detect::CandidateReport> candidates =
      detect::detect_candidates(graphs, cfg.detect_k);
  res.processed = static_cast<long>(candidates.size());

  fs::create_directories(cfg.out_dir);
  write_file_if_changed(cfg.out_dir / "graphs.json", detect::graphs_to_json(graphs));
  write_file_if_changed(cfg.out_dir / "candidates.json",
                        detect::reports_to_json(candidates));
  return res;
}

//===----------------------------------------------------------------------===//
// scan
//===----------------------------------------------------------------------===//

StageResult stage_scan(const RunConfig &cfg) {
  StageResult res{"scan"};
  fs::path candidates_path = cfg.out_dir / "candidates.json";
  std::vector<detect::CandidateReport> reports =
      fs::exists(candidates_path)
          ? detect::reports_from_json(read_file(candidates_path))
          : std::vector<detect::CandidateReport>{};

  std::vector<detect::SnapshotFile> snapshot;
  if (!cfg.scan_snapshot.empty() && fs::exists(cfg.scan_snapshot)) {
    std::vector<fs::path> paths;
    for (const auto &entry : fs::recursive_directory_iterator(cfg.scan_snapshot)) {
      if (!entry.is_regular_file())
        continue;
      fs::path ext = entry.path().extension();
      if (ext == ".c" || ext == ".h")
        paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    snapshot.resize(paths.size());
    parallel_for(paths.size(), cfg.workers, [&](std::size_t i) {
      snapshot[i].path = fs::relative(paths[i], cfg.scan_snapshot).generic_string();
      snapshot[i].tree = syntax::parse_source(read_file(paths[i]), cfg.grammar_id);
    });
  }

  for (detect::CandidateReport &r : reports) {
    try {
      pattern::FixPattern pat;
      pat.shape = pattern::shape_from_canonical(r.fp.canonical);
      pat.level = r.level;
      detect::AnchorQuery q = detect::anchor_query(pat, cfg.grammar_id);
      r.omissions = detect::scan_omissions(q, snapshot, r.sites);
      ++res.processed;
    } catch (const Error &e) {
      ++res.failed;
      res.notes.push_back(r.cve_id + ": " + e.what());
    }
  }

  fs::create_directories(cfg.out_dir);
  write_file_if_changed(cfg.out_dir / "report.json", detect::reports_to_json(reports));
  json failures = json::array();
  for (const std::string &n : res.notes)
    failures.push_back(n);
  write_failure_marker(cfg.out_dir, "scan", res.failed ? failures : json::array());
  return res;
}

//===----------------------------------------------------------------------===//
// stats
//===----------------------------------------------------------------------===//

StageResult stage_stats(const RunConfig &cfg) {
  StageResult res{"stats"};
  std::string content = read_file(cfg.manifest);
  fs::path base_dir = cfg.manifest.parent_path();

  std::vector<corpus::CveRecord> records;
  std::size_t line_no = 0;
  for (const std::string &line : split_lines(content)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      records.push_back(corpus::parse_manifest_line(line, base_dir, line_no));
    } catch (const Error &e) {
      ++res.failed;
      res.notes.push_back(e.what());
    }
  }

  stats::AggregateTable table = stats::aggregate(records);
  res.processed = static_cast<long>(records.size()) -
                  static_cast<long>(table.skipped.size());
  res.skipped = static_cast<long>(table.skipped.size());
  for (const std::string &s : table.skipped)
    res.notes.push_back(s);

  fs::create_directories(cfg.out_dir);
  write_file_if_changed(cfg.out_dir / "stats.json", stats::aggregate_to_json(table));
  write_file_if_changed(cfg.out_dir / "stats.csv", stats::per_record_csv(records));
  return res;
}

//===----------------------------------------------------------------------===//
// report
//===----------------------------------------------------------------------===//

StageResult stage_report(const RunConfig &cfg) {
  StageResult res{"report"};
  fs::path enriched = cfg.out_dir / "report.json";
  fs::path plain = cfg.out_dir / "candidates.json";
  std::vector<detect::CandidateReport> reports;
  if (fs::exists(enriched))
    reports = detect::reports_from_json(read_file(enriched));
  else if (fs::exists(plain))
    reports = detect::reports_from_json(read_file(plain));
  res.processed = static_cast<long>(reports.size());
  fs::create_directories(cfg.out_dir);
  write_file_if_changed(cfg.out_dir / "report.txt", detect::reports_to_text(reports));
  return res;
}

//===----------------------------------------------------------------------===//
// run
//===----------------------------------------------------------------------===//

std::string PipelineResult::summary() const {
  std::ostringstream out;
  for (const StageResult &s : stages) {
    out << s.stage << ": " << s.processed << " processed";
    if (s.skipped)
      out << ", " << s.skipped << " skipped";
    if (s.failed)
      out << ", " << s.failed << " FAILED";
    out << "\n";
  }
  return out.str();
}

PipelineResult run_pipeline(const RunConfig &cfg) {
  validate(cfg);
  PipelineResult result;
  result.stages.push_back(stage_ingest(cfg));
  result.stages.push_back(stage_mine(cfg));
  result.stages.push_back(stage_cluster(cfg));
  result.stages.push_back(stage_detect(cfg));
  if (!cfg.scan_snapshot.empty())
    result.stages.push_back(stage_scan(cfg));
  result.stages.push_back(stage_stats(cfg));
  result.stages.push_back(stage_report(cfg));
  for (const StageResult &s : result.stages)
    if (!s.ok())
      result.exit_code = 1;
  return result;
}

} // namespace fixprint::pipeline
