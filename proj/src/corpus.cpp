//===- corpus.cpp - CVE fix manifests and the on-disk patch store ------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/corpus.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <limits>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace fixprint::corpus {

using nlohmann::json;

std::string to_string(RootCauseLabel::Phase phase) {
  switch (phase) {
  case RootCauseLabel::Phase::PreFixMisled: return "pre_fix_misled";
  case RootCauseLabel::Phase::InFixMissingSimilar: return "in_fix_missing_similar";
  case RootCauseLabel::Phase::PostFixSemanticError: return "post_fix_semantic_error";
  }
  return "?";
}

std::string to_string(RootCauseLabel::Sublevel sublevel) {
  switch (sublevel) {
  case RootCauseLabel::Sublevel::Variable: return "variable";
  case RootCauseLabel::Sublevel::Function: return "function";
  case RootCauseLabel::Sublevel::Resource: return "resource";
  case RootCauseLabel::Sublevel::AccessControl: return "access_control";
  }
  return "?";
}

namespace {

std::optional<RootCauseLabel::Phase> phase_from_string(std::string_view s) {
  if (s == "pre_fix_misled") return RootCauseLabel::Phase::PreFixMisled;
  if (s == "in_fix_missing_similar") return RootCauseLabel::Phase::InFixMissingSimilar;
  if (s == "post_fix_semantic_error") return RootCauseLabel::Phase::PostFixSemanticError;
  return std::nullopt;
}

std::optional<RootCauseLabel::Sublevel> sublevel_from_string(std::string_view s) {
  if (s == "variable") return RootCauseLabel::Sublevel::Variable;
  if (s == "function") return RootCauseLabel::Sublevel::Function;
  if (s == "resource") return RootCauseLabel::Sublevel::Resource;
  if (s == "access_control") return RootCauseLabel::Sublevel::AccessControl;
  return std::nullopt;
}

} // namespace

bool valid_cve_id(std::string_view id) {
  if (id.substr(0, 4) != "CVE-")
    return false;
  std::string_view rest = id.substr(4);
  std::size_t dash = rest.find('-');
  if (dash == std::string_view::npos || dash != 4)
    return false;
  int year = 0;
  auto [yp, yec] = std::from_chars(rest.data(), rest.data() + 4, year);
  if (yec != std::errc() || yp != rest.data() + 4 || year < 1999)
    return false;
  std::string_view num = rest.substr(5);
  if (num.empty())
    return false;
  long n = 0;
  auto [np, nec] = std::from_chars(num.data(), num.data() + num.size(), n);
  return nec == std::errc() && np == num.data() + num.size() && n >= 1;
}

std::int64_t civil_days(std::string_view iso_date) {
  // Expect YYYY-MM-DD.
  if (iso_date.size() != 10 || iso_date[4] != '-' || iso_date[7] != '-')
    throw Error("malformed date (want YYYY-MM-DD): " + std::string(iso_date));
  auto num = [&](std::size_t off, std::size_t len) {
    int v = 0;
    auto [p, ec] = std::from_chars(iso_date.data() + off, iso_date.data() + off + len, v);
    if (ec != std::errc() || p != iso_date.data() + off + len)
      throw Error("malformed date (want YYYY-MM-DD): " + std::string(iso_date));
    return v;
  };
  std::chrono::year_month_day ymd{std::chrono::year{num(0, 4)},
                                  std::chrono::month{static_cast<unsigned>(num(5, 2))},
                                  std::chrono::day{static_cast<unsigned>(num(8, 2))}};
  if (!ymd.ok())
    throw Error("invalid calendar date: " + std::string(iso_date));
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

//===----------------------------------------------------------------------===//
// Manifest parsing
//===----------------------------------------------------------------------===//

namespace {

FixEvent parse_fix_event(const json &j, const std::filesystem::path &base_dir,
                         const std::string &where) {
  FixEvent e;
  if (!j.is_object())
    throw Error(where + ": fix entry is not an object");
  e.commit_hash = j.value("commit_hash", "");
  if (e.commit_hash.empty())
    throw Error(where + ": fix entry lacks commit_hash");
  e.commit_date = j.value("commit_date", "");
  civil_days(e.commit_date); // validates
  if (j.contains("associated_cve") && !j["associated_cve"].is_null()) {
    e.associated_cve = j["associated_cve"].get<std::string>();
    if (!valid_cve_id(e.associated_cve))
      throw Error(where + ": bad associated_cve '" + e.associated_cve + "'");
  }

  if (j.contains("diff_inline")) {
    e.diff_text = j["diff_inline"].get<std::string>();
  } else if (j.contains("diff_path")) {
    std::filesystem::path p = j["diff_path"].get<std::string>();
    if (p.is_relative())
      p = base_dir / p;
    e.diff_text = read_file(p);
  } else {
    throw Error(where + ": fix entry needs diff_inline or diff_path");
  }

  // touched_files must agree with the diff headers; derive when absent.
  std::vector<diff::FileDiff> files;
  try {
    files = diff::parse_unified_diff(e.diff_text);
  } catch (const Error &err) {
    throw Error(where + ": bad diff: " + err.what());
  }
  std::vector<std::string> derived;
  for (const auto &f : files)
    derived.push_back(f.path());
  if (j.contains("touched_files")) {
    e.touched_files = j["touched_files"].get<std::vector<std::string>>();
    std::set<std::string> want(e.touched_files.begin(), e.touched_files.end());
    std::set<std::string> got(derived.begin(), derived.end());
    if (want != got)
      throw Error(where + ": touched_files does not match diff headers");
  } else {
    e.touched_files = std::move(derived);
  }
  return e;
}

CveRecord parse_record(const json &j, const std::filesystem::path &base_dir,
                       const std::string &where) {
  CveRecord r;
  r.cve_id = j.value("cve_id", "");
  if (!valid_cve_id(r.cve_id))
    throw Error(where + ": bad cve_id '" + r.cve_id + "'");
  r.vuln_type = j.value("vuln_type", "");
  if (r.vuln_type.empty())
    throw Error(where + ": vuln_type must be non-empty");
  r.description = j.value("description", "");

  if (j.contains("root_cause") && !j["root_cause"].is_null()) {
    const json &rc = j["root_cause"];
    RootCauseLabel label;
    std::string phase = rc.value("phase", "");
    auto p = phase_from_string(phase);
    if (!p)
      throw Error(where + ": unknown root_cause phase '" + phase + "'");
    label.phase = *p;
    if (rc.contains("sublevel") && !rc["sublevel"].is_null()) {
      std::string sub = rc["sublevel"].get<std::string>();
      auto s = sublevel_from_string(sub);
      if (!s)
        throw Error(where + ": unknown root_cause sublevel '" + sub + "'");
      label.sublevel = *s;
    }
    bool is_post = label.phase == RootCauseLabel::Phase::PostFixSemanticError;
    if (is_post != label.sublevel.has_value())
      throw Error(where + ": sublevel is required exactly for post_fix_semantic_error");
    r.root_cause = label;
  }

  if (!j.contains("fixes") || !j["fixes"].is_array() || j["fixes"].empty())
    throw Error(where + ": fixes must be a non-empty array");
  std::int64_t prev = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < j["fixes"].size(); ++i) {
    FixEvent e = parse_fix_event(j["fixes"][i], base_dir,
                                 where + ", fix " + std::to_string(i));
    std::int64_t d = civil_days(e.commit_date);
    if (d < prev)
      throw Error(where + ": fix dates out of order at index " + std::to_string(i));
    prev = d;
    r.fixes.push_back(std::move(e));
  }
  return r;
}

} // namespace

CveRecord parse_manifest_line(std::string_view line,
                              const std::filesystem::path &base_dir,
                              std::size_t line_no) {
  std::string where = "manifest line " + std::to_string(line_no);
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw Error(where + ": malformed JSON");
  return parse_record(j, base_dir, where);
}

std::vector<CveRecord> parse_manifest(std::string_view content,
                                      const std::filesystem::path &base_dir) {
  std::vector<CveRecord> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  for (const std::string &line : split_lines(content)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    CveRecord r = parse_manifest_line(line, base_dir, line_no);
    if (!seen.insert(r.cve_id).second)
      throw Error("manifest line " + std::to_string(line_no) + ": duplicate cve_id " +
                  r.cve_id);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CveRecord> load_manifest(const std::filesystem::path &path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::string manifest_to_jsonl(const std::vector<CveRecord> &records) {
  std::string out;
  for (const CveRecord &r : records) {
    json j;
    j["cve_id"] = r.cve_id;
    j["vuln_type"] = r.vuln_type;
    j["description"] = r.description;
    if (r.root_cause) {
      json rc;
      rc["phase"] = to_string(r.root_cause->phase);
      if (r.root_cause->sublevel)
        rc["sublevel"] = to_string(*r.root_cause->sublevel);
      j["root_cause"] = rc;
    } else {
      j["root_cause"] = nullptr;
    }
    json fixes = json::array();
    for (const FixEvent &e : r.fixes) {
      json f;
      f["commit_hash"] = e.commit_hash;
      f["commit_date"] = e.commit_date;
      if (!e.associated_cve.empty())
        f["associated_cve"] = e.associated_cve;
      f["diff_inline"] = e.diff_text;
      f["touched_files"] = e.touched_files;
      fixes.push_back(std::move(f));
    }
    j["fixes"] = std::move(fixes);
    out += j.dump();
    out += '\n';
  }
  return out;
}

//===----------------------------------------------------------------------===//
// split_patch
//===----------------------------------------------------------------------===//

SplitResult split_patch(const std::string &cve_id, const FixEvent &event,
                        const SnapshotSource &snapshots) {
  SplitResult result;
  std::vector<diff::FileDiff> files = diff::parse_unified_diff(event.diff_text);

  for (const diff::FileDiff &fd : files) {
    const std::string &path = fd.path();
    if (fd.is_binary) {
      result.warnings.push_back("skipping binary file " + path + " in commit " +
                                event.commit_hash);
      continue;
    }

    auto before_it = snapshots.before.find(path);
    auto after_it = snapshots.after.find(path);
    bool have_before = before_it != snapshots.before.end();
    bool have_after = after_it != snapshots.after.end();

    FineGrainedPatch p;
    p.cve_id = cve_id;
    p.commit_hash = event.commit_hash;
    p.file_path = path;
    p.hunks = fd.hunks;
    p.diff_slice = fd.raw;

    if (have_before) {
      p.before_text = before_it->second;
      p.after_text = have_after ? after_it->second
                                : diff::apply_hunks(p.before_text, fd.hunks);
    } else if (have_after) {
      p.after_text = after_it->second;
      p.before_text = diff::unapply_hunks(p.after_text, fd.hunks);
    } else if (fd.old_path.empty()) { // creation: before side is vacuous
      p.before_text = "";
      p.after_text = diff::apply_hunks("", fd.hunks);
    } else if (fd.new_path.empty()) { // deletion
      p.after_text = "";
      p.before_text = diff::unapply_hunks("", fd.hunks);
    } else {
      throw Error("missing snapshot for file " + path + " in commit " +
                  event.commit_hash);
    }
    // apply must reproduce after_text byte-for-byte.
    if (have_before && have_after) {
      std::string applied = diff::apply_hunks(p.before_text, fd.hunks);
      if (applied != p.after_text)
        throw Error("hunk application mismatch for file " + path + " in commit " +
                    event.commit_hash);
    }
    result.patches.push_back(std::move(p));
  }
  return result;
}

//===----------------------------------------------------------------------===//
// store
//===----------------------------------------------------------------------===//

std::string encode_store_path(std::string_view file_path) {
  std::string out;
  out.reserve(file_path.size());
  for (char c : file_path) {
    if (c == '/')
      out += "__";
    else
      out += c;
  }
  return out;
}

namespace {

json entry_to_json(const StoreEntry &e) {
  json j;
  j["cve_id"] = e.cve_id;
  j["commit_hash"] = e.commit_hash;
  j["file_path"] = e.file_path;
  j["dir"] = e.dir;
  return j;
}

StoreEntry entry_from_json(const json &j) {
  StoreEntry e;
  e.cve_id = j.value("cve_id", "");
  e.commit_hash = j.value("commit_hash", "");
  e.file_path = j.value("file_path", "");
  e.dir = j.value("dir", "");
  return e;
}

} // namespace

std::vector<StoreEntry> load_store_index(const std::filesystem::path &root) {
  std::filesystem::path index = root / "index.json";
  if (!std::filesystem::exists(index))
    return {};
  json j = json::parse(read_file(index), nullptr, false);
  if (j.is_discarded() || !j.is_array())
    throw Error("corrupt corpus index: " + index.string());
  std::vector<StoreEntry> out;
  for (const json &e : j)
    out.push_back(entry_from_json(e));
  return out;
}

StoreResult store_corpus(const std::vector<FineGrainedPatch> &patches,
                         const std::filesystem::path &root) {
  StoreResult result;
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec)
    throw Error("cannot create corpus root " + root.string() + ": " + ec.message());

  std::map<std::string, StoreEntry> index;
  for (StoreEntry &e : load_store_index(root))
    index.emplace(e.dir, std::move(e));

  for (const FineGrainedPatch &p : patches) {
    std::string rel = p.cve_id + "/" + p.commit_hash + "/" + encode_store_path(p.file_path);
    auto it = index.find(rel);
    if (it != index.end() && it->second.file_path != p.file_path)
      throw Error("store layout collision: " + it->second.file_path + " and " +
                  p.file_path + " both map to " + rel);
    std::filesystem::path dir = root / rel;
    result.files_written += write_file_if_changed(dir / "before", p.before_text);
    result.files_written += write_file_if_changed(dir / "after", p.after_text);
    result.files_written += write_file_if_changed(dir / "diff", p.diff_slice);
    index.insert_or_assign(rel, StoreEntry{p.cve_id, p.commit_hash, p.file_path, rel});
  }

  json idx = json::array();
  for (const auto &[dir, e] : index) {
    result.entries.push_back(e);
    idx.push_back(entry_to_json(e));
  }
  result.files_written += write_file_if_changed(root / "index.json", idx.dump(2) + "\n");
  return result;
}

} // namespace fixprint::corpus
