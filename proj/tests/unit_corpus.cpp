#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixprint/corpus.hpp"
#include "fixprint/diff.hpp"
#include "fixprint/util.hpp"

#include "testutil.hpp"

using namespace fixprint;
using namespace fixprint::corpus;

namespace {

std::vector<CveRecord> parse(const std::string &content) {
  return parse_manifest(content, std::filesystem::path("."));
}

std::string diff_for(const std::string &path, const std::string &before,
                     const std::string &after) {
  return diff::make_unified_diff(path, path, before, after);
}

// escaped for JSON embedding
std::string jesc(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += '\\', out += c;
    else if (c == '\n')
      out += "\\n";
    else if (c == '\t')
      out += "\\t";
    else
      out += c;
  }
  return out;
}

const std::string kTwoFixLine =
    R"({"cve_id":"CVE-2016-7097","vuln_type":"privilege-escalation","description":"posix acl setattr","root_cause":{"phase":"in_fix_missing_similar"},"fixes":[)"
    R"({"commit_hash":"a0a1a2","commit_date":"2016-08-29","diff_inline":")" +
    jesc(diff_for("fs/posix_acl.c", "int a;\n", "int a;\nint b;\n")) +
    R"(","touched_files":["fs/posix_acl.c"]},)"
    R"({"commit_hash":"b0b1b2","commit_date":"2017-01-18","associated_cve":"CVE-2017-5551","diff_inline":")" +
    jesc(diff_for("fs/tmpfs.c", "int a;\n", "int a;\nint c;\n")) +
    R"(","touched_files":["fs/tmpfs.c"]}]})";

} // namespace

TEST_CASE("empty manifest parses to an empty list") {
  CHECK(parse("").empty());
  CHECK(parse("\n  \n").empty());
}

TEST_CASE("two-fix chain with an associated follow-up CVE") {
  auto records = parse(kTwoFixLine + "\n");
  REQUIRE(records.size() == 1);
  const CveRecord &r = records[0];
  CHECK(r.cve_id == "CVE-2016-7097");
  REQUIRE(r.fixes.size() == 2);
  CHECK(r.fixes[0].associated_cve.empty());
  CHECK(r.fixes[1].associated_cve == "CVE-2017-5551");
  CHECK(r.fixes[1].touched_files == std::vector<std::string>{"fs/tmpfs.c"});
  REQUIRE(r.root_cause.has_value());
  CHECK(r.root_cause->phase == RootCauseLabel::Phase::InFixMissingSimilar);
}

TEST_CASE("manifest validation errors") {
  SUBCASE("out-of-order fix dates") {
    std::string line =
        R"({"cve_id":"CVE-2011-1017","vuln_type":"overflow","fixes":[)"
        R"({"commit_hash":"c1","commit_date":"2011-03-01","diff_inline":""},)"
        R"({"commit_hash":"c2","commit_date":"2011-02-01","diff_inline":""}]})";
    CHECK_THROWS_WITH_AS(parse(line), doctest::Contains("out of order"), Error);
  }
  SUBCASE("malformed JSON names the line") {
    std::string content = kTwoFixLine + "\n{not json}\n";
    CHECK_THROWS_WITH_AS(parse(content), doctest::Contains("line 2"), Error);
  }
  SUBCASE("duplicate cve_id names the id") {
    std::string content = kTwoFixLine + "\n" + kTwoFixLine + "\n";
    CHECK_THROWS_WITH_AS(parse(content), doctest::Contains("CVE-2016-7097"), Error);
  }
  SUBCASE("unknown root cause phase") {
    std::string line =
        R"({"cve_id":"CVE-2011-1017","vuln_type":"overflow","root_cause":{"phase":"cosmic_rays"},"fixes":[{"commit_hash":"c1","commit_date":"2011-03-01","diff_inline":""}]})";
    CHECK_THROWS_WITH_AS(parse(line), doctest::Contains("cosmic_rays"), Error);
  }
  SUBCASE("sublevel exactly for post-fix semantic errors") {
    std::string missing =
        R"({"cve_id":"CVE-2011-1017","vuln_type":"overflow","root_cause":{"phase":"post_fix_semantic_error"},"fixes":[{"commit_hash":"c1","commit_date":"2011-03-01","diff_inline":""}]})";
    CHECK_THROWS_AS(parse(missing), Error);
    std::string extra =
        R"({"cve_id":"CVE-2011-1017","vuln_type":"overflow","root_cause":{"phase":"pre_fix_misled","sublevel":"variable"},"fixes":[{"commit_hash":"c1","commit_date":"2011-03-01","diff_inline":""}]})";
    CHECK_THROWS_AS(parse(extra), Error);
  }
  SUBCASE("cve id shape") {
    CHECK(valid_cve_id("CVE-2016-7097"));
    CHECK(valid_cve_id("CVE-1999-1"));
    CHECK_FALSE(valid_cve_id("CVE-1998-1234"));   // year too early
    CHECK_FALSE(valid_cve_id("CVE-20xx-1234"));
    CHECK_FALSE(valid_cve_id("cve-2016-7097"));
    CHECK_FALSE(valid_cve_id("CVE-2016-"));
    std::string line =
        R"({"cve_id":"WAT-2016-7097","vuln_type":"overflow","fixes":[{"commit_hash":"c1","commit_date":"2016-01-01","diff_inline":""}]})";
    CHECK_THROWS_AS(parse(line), Error);
  }
  SUBCASE("touched_files must match the diff headers") {
    std::string line =
        R"({"cve_id":"CVE-2016-7097","vuln_type":"overflow","fixes":[{"commit_hash":"c1","commit_date":"2016-01-01","diff_inline":")" +
        jesc(diff_for("a.c", "x\n", "y\n")) +
        R"(","touched_files":["b.c"]}]})";
    CHECK_THROWS_WITH_AS(parse(line), doctest::Contains("touched_files"), Error);
  }
  SUBCASE("vuln_type must be non-empty") {
    std::string line =
        R"({"cve_id":"CVE-2016-7097","vuln_type":"","fixes":[{"commit_hash":"c1","commit_date":"2016-01-01","diff_inline":""}]})";
    CHECK_THROWS_AS(parse(line), Error);
  }
}

TEST_CASE("diff_path resolves relative to the manifest directory") {
  testutil::TempDir tmp("manifest");
  std::string d = diff_for("a.c", "old\n", "new\n");
  write_file_if_changed(tmp.path() / "diffs" / "c1.diff", d);
  std::string line =
      R"({"cve_id":"CVE-2016-7097","vuln_type":"overflow","fixes":[{"commit_hash":"c1","commit_date":"2016-01-01","diff_path":"diffs/c1.diff"}]})";
  write_file_if_changed(tmp.path() / "manifest.jsonl", line + "\n");
  auto records = load_manifest(tmp.path() / "manifest.jsonl");
  REQUIRE(records.size() == 1);
  CHECK(records[0].fixes[0].diff_text == d);
  CHECK(records[0].fixes[0].touched_files == std::vector<std::string>{"a.c"});
}

TEST_CASE("manifest round-trip is field-for-field") {
  testutil::Rng rng(2718);
  std::vector<CveRecord> records;
  for (int i = 0; i < 12; ++i) {
    CveRecord r;
    r.cve_id = "CVE-20" + std::to_string(10 + i) + "-" + std::to_string(1000 + i);
    r.vuln_type = testutil::pick(rng, std::vector<std::string>{"denial-of-service",
                                                               "overflow", "bypass"});
    r.description = "record " + std::to_string(i) + " with \"quotes\" and\nnewline";
    int phase = testutil::uniform(rng, 0, 3);
    if (phase < 3) {
      RootCauseLabel label;
      label.phase = static_cast<RootCauseLabel::Phase>(phase);
      if (label.phase == RootCauseLabel::Phase::PostFixSemanticError)
        label.sublevel = static_cast<RootCauseLabel::Sublevel>(testutil::uniform(rng, 0, 3));
      r.root_cause = label;
    }
    int chain = testutil::uniform(rng, 1, 3);
    for (int f = 0; f < chain; ++f) {
      FixEvent e;
      e.commit_hash = "commit" + std::to_string(i) + std::to_string(f);
      e.commit_date = "20" + std::to_string(10 + i) + "-0" +
                      std::to_string(1 + f) + "-15";
      if (f > 0 && testutil::uniform(rng, 0, 1))
        e.associated_cve = "CVE-2019-" + std::to_string(100 + i);
      std::string path = "drivers/x" + std::to_string(f) + ".c";
      e.diff_text = diff_for(path, "int a;\n", "int a;\nint b" + std::to_string(i) + ";\n");
      e.touched_files = {path};
      r.fixes.push_back(std::move(e));
    }
    records.push_back(std::move(r));
  }
  std::string jsonl = manifest_to_jsonl(records);
  std::vector<CveRecord> loaded = parse_manifest(jsonl, ".");
  CHECK(loaded == records);
}

TEST_CASE("split_patch produces one patch per touched file") {
  std::string d1 = diff_for("a.c", "a1\n", "a2\n");
  std::string d2 = diff_for("b/b.c", "b1\n", "b2\n");
  std::string d3 = diff_for("c.c", "c1\n", "c2\n");
  FixEvent e;
  e.commit_hash = "deadbeef";
  e.commit_date = "2017-06-19";
  e.diff_text = d1 + d2 + d3;
  e.touched_files = {"a.c", "b/b.c", "c.c"};

  SnapshotSource snaps;
  snaps.before = {{"a.c", "a1\n"}, {"b/b.c", "b1\n"}, {"c.c", "c1\n"}};

  SplitResult res = split_patch("CVE-2017-1000364", e, snaps);
  REQUIRE(res.patches.size() == 3);
  CHECK(res.patches[0].file_path == "a.c");
  CHECK(res.patches[0].after_text == "a2\n"); // derived through the hunks
  CHECK(res.patches[1].file_path == "b/b.c");
  CHECK(res.patches[2].before_text == "c1\n");
  for (const auto &p : res.patches)
    CHECK(diff::apply_hunks(p.before_text, p.hunks) == p.after_text);
}

TEST_CASE("split_patch: empty diff gives an empty list") {
  FixEvent e;
  e.commit_hash = "deadbeef";
  e.commit_date = "2017-06-19";
  e.diff_text = "";
  SplitResult res = split_patch("CVE-2017-1000364", e, {});
  CHECK(res.patches.empty());
}

TEST_CASE("split_patch error and warning paths") {
  SUBCASE("missing snapshot names the file") {
    FixEvent e;
    e.commit_hash = "c0ffee";
    e.commit_date = "2015-01-01";
    e.diff_text = diff_for("drivers/tda8083.c", "x\n", "y\n");
    e.touched_files = {"drivers/tda8083.c"};
    CHECK_THROWS_WITH_AS(split_patch("CVE-2015-9289", e, {}),
                         doctest::Contains("tda8083.c"), Error);
  }
  SUBCASE("after snapshot disagreeing with hunks names the file") {
    FixEvent e;
    e.commit_hash = "c0ffee";
    e.commit_date = "2015-01-01";
    e.diff_text = diff_for("a.c", "x\n", "y\n");
    e.touched_files = {"a.c"};
    SnapshotSource snaps;
    snaps.before = {{"a.c", "x\n"}};
    snaps.after = {{"a.c", "WRONG\n"}};
    CHECK_THROWS_WITH_AS(split_patch("CVE-2015-9289", e, snaps),
                         doctest::Contains("mismatch"), Error);
  }
  SUBCASE("binary files are skipped with a warning") {
    FixEvent e;
    e.commit_hash = "c0ffee";
    e.commit_date = "2015-01-01";
    e.diff_text = "diff --git a/fw.bin b/fw.bin\n"
                  "Binary files a/fw.bin and b/fw.bin differ\n" +
                  diff_for("a.c", "x\n", "y\n");
    SnapshotSource snaps;
    snaps.before = {{"a.c", "x\n"}};
    SplitResult res = split_patch("CVE-2015-9289", e, snaps);
    CHECK(res.patches.size() == 1);
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].find("fw.bin") != std::string::npos);
  }
}

TEST_CASE("hunk application reproduces after_text on random edits") {
  testutil::ProgramGen gen(555);
  testutil::Rng rng(556);
  for (int i = 0; i < 80; ++i) {
    std::string before = gen.generate(40);
    std::string after =
        testutil::random_line_edits(rng, before, testutil::uniform(rng, 1, 5), gen);
    FixEvent e;
    e.commit_hash = "h";
    e.commit_date = "2020-01-01";
    e.diff_text = diff_for("f.c", before, after);
    if (e.diff_text.empty())
      continue;
    e.touched_files = {"f.c"};
    SnapshotSource snaps;
    snaps.before = {{"f.c", before}};
    SplitResult res = split_patch("CVE-2020-1000", e, snaps);
    REQUIRE(res.patches.size() == 1);
    CHECK(res.patches[0].after_text == after);
  }
}

TEST_CASE("store layout, idempotence, and the index") {
  testutil::TempDir tmp("store");
  FineGrainedPatch p;
  p.cve_id = "CVE-2015-9289";
  p.commit_hash = "abc123";
  p.file_path = "drivers/media/dvb-frontends/stv0288.c";
  p.before_text = "before\n";
  p.after_text = "after\n";
  p.diff_slice = "--- a/x\n+++ b/x\n";

  StoreResult first = store_corpus({p}, tmp.path());
  CHECK(first.files_written > 0);
  std::filesystem::path dir = tmp.path() / "CVE-2015-9289" / "abc123" /
                              "drivers__media__dvb-frontends__stv0288.c";
  CHECK(read_file(dir / "before") == "before\n");
  CHECK(read_file(dir / "after") == "after\n");
  CHECK(read_file(dir / "diff") == p.diff_slice);
  REQUIRE(first.entries.size() == 1);
  CHECK(first.entries[0].file_path == p.file_path);

  // Second run writes nothing.
  StoreResult second = store_corpus({p}, tmp.path());
  CHECK(second.files_written == 0);
  CHECK(second.entries == first.entries);

  // Index survives loading.
  auto loaded = load_store_index(tmp.path());
  CHECK(loaded == first.entries);
}

TEST_CASE("store with no patches leaves only the index") {
  testutil::TempDir tmp("store-empty");
  StoreResult res = store_corpus({}, tmp.path());
  CHECK(res.entries.empty());
  int files = 0;
  for (const auto &e : std::filesystem::directory_iterator(tmp.path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 1); // index.json
}

TEST_CASE("store detects layout collisions") {
  testutil::TempDir tmp("store-collide");
  FineGrainedPatch p1;
  p1.cve_id = "CVE-2015-9289";
  p1.commit_hash = "abc123";
  p1.file_path = "a/b.c";
  FineGrainedPatch p2 = p1;
  p2.file_path = "a__b.c"; // encodes to the same directory
  CHECK(encode_store_path(p1.file_path) == encode_store_path(p2.file_path));
  CHECK_THROWS_WITH_AS(store_corpus({p1, p2}, tmp.path()), doctest::Contains("collision"),
                       Error);
}

TEST_CASE("civil_days handles calendars") {
  CHECK(civil_days("1970-01-01") == 0);
  CHECK(civil_days("2005-06-26") + 1564 == civil_days("2009-10-07"));
  CHECK_THROWS_AS(civil_days("2005-13-01"), Error);
  CHECK_THROWS_AS(civil_days("2005-02-30"), Error);
  CHECK_THROWS_AS(civil_days("garbage"), Error);
}
