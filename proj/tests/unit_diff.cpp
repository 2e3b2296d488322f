#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixprint/diff.hpp"
#include "fixprint/util.hpp"

#include "testutil.hpp"

using namespace fixprint;

namespace {

const char *kSimpleDiff =
    "--- a/drivers/foo.c\n"
    "+++ b/drivers/foo.c\n"
    "@@ -1,4 +1,5 @@\n"
    " int a;\n"
    "-int b;\n"
    "+int bb;\n"
    "+int c;\n"
    " int d;\n"
    " int e;\n";

} // namespace

TEST_CASE("parse simple unified diff") {
  auto files = diff::parse_unified_diff(kSimpleDiff);
  REQUIRE(files.size() == 1);
  CHECK(files[0].path() == "drivers/foo.c");
  REQUIRE(files[0].hunks.size() == 1);
  const diff::Hunk &h = files[0].hunks[0];
  CHECK(h.old_start == 1);
  CHECK(h.old_count == 4);
  CHECK(h.new_count == 5);
  CHECK(h.lines.size() == 6);
}

TEST_CASE("apply and unapply round-trip") {
  std::string before = "int a;\nint b;\nint d;\nint e;\n";
  std::string after = "int a;\nint bb;\nint c;\nint d;\nint e;\n";
  auto files = diff::parse_unified_diff(kSimpleDiff);
  CHECK(diff::apply_hunks(before, files[0].hunks) == after);
  CHECK(diff::unapply_hunks(after, files[0].hunks) == before);
}

TEST_CASE("apply rejects mismatched context") {
  std::string wrong = "int a;\nint X;\nint d;\nint e;\n";
  auto files = diff::parse_unified_diff(kSimpleDiff);
  CHECK_THROWS_AS(diff::apply_hunks(wrong, files[0].hunks), Error);
}

TEST_CASE("parse errors carry line numbers") {
  std::string bad = "--- a/x.c\n+++ b/x.c\n@@ garbage @@\n";
  try {
    diff::parse_unified_diff(bad);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("truncated hunk is an error") {
  std::string bad = "--- a/x.c\n+++ b/x.c\n@@ -1,3 +1,3 @@\n a\n";
  CHECK_THROWS_AS(diff::parse_unified_diff(bad), Error);
}

TEST_CASE("git headers and binary sections") {
  std::string text =
      "diff --git a/x.c b/x.c\n"
      "index 111..222 100644\n"
      "--- a/x.c\n"
      "+++ b/x.c\n"
      "@@ -1,1 +1,1 @@\n"
      "-a\n"
      "+b\n"
      "diff --git a/blob.bin b/blob.bin\n"
      "Binary files a/blob.bin and b/blob.bin differ\n";
  auto files = diff::parse_unified_diff(text);
  REQUIRE(files.size() == 2);
  CHECK(files[0].path() == "x.c");
  CHECK_FALSE(files[0].is_binary);
  CHECK(files[1].is_binary);
}

TEST_CASE("file creation and deletion headers") {
  std::string text =
      "--- /dev/null\n"
      "+++ b/new.c\n"
      "@@ -0,0 +1,2 @@\n"
      "+int a;\n"
      "+int b;\n";
  auto files = diff::parse_unified_diff(text);
  REQUIRE(files.size() == 1);
  CHECK(files[0].old_path.empty());
  CHECK(files[0].path() == "new.c");
  CHECK(diff::apply_hunks("", files[0].hunks) == "int a;\nint b;\n");
}

TEST_CASE("missing final newline round-trips") {
  std::string before = "a\nb";
  std::string after = "a\nc";
  std::string d = diff::make_unified_diff("f.c", "f.c", before, after);
  CHECK(d.find("\\ No newline at end of file") != std::string::npos);
  auto files = diff::parse_unified_diff(d);
  REQUIRE(files.size() == 1);
  CHECK(diff::apply_hunks(before, files[0].hunks) == after);
}

TEST_CASE("generated diffs apply exactly: randomized") {
  testutil::Rng rng(20210615);
  testutil::ProgramGen gen(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::string before = gen.generate(30);
    std::string after = testutil::random_line_edits(rng, before,
                                                    testutil::uniform(rng, 1, 4), gen);
    std::string d = diff::make_unified_diff("a.c", "a.c", before, after);
    if (before == after) {
      CHECK(d.empty());
      continue;
    }
    auto files = diff::parse_unified_diff(d);
    REQUIRE(files.size() == 1);
    CHECK(diff::apply_hunks(before, files[0].hunks) == after);
    CHECK(diff::unapply_hunks(after, files[0].hunks) == before);
  }
}

TEST_CASE("multi-file diffs keep per-file slices") {
  std::string text =
      "--- a/one.c\n+++ b/one.c\n@@ -1,1 +1,1 @@\n-a\n+b\n"
      "--- a/two.c\n+++ b/two.c\n@@ -1,1 +1,2 @@\n a\n+c\n";
  auto files = diff::parse_unified_diff(text);
  REQUIRE(files.size() == 2);
  CHECK(files[0].raw.find("one.c") != std::string::npos);
  CHECK(files[0].raw.find("two.c") == std::string::npos);
  CHECK(files[1].raw.find("two.c") != std::string::npos);
}
