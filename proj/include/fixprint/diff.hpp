//===- diff.hpp - unified diff parsing, application, generation -*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_DIFF_HPP
#define FIXPRINT_DIFF_HPP

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fixprint::diff {

enum class LineTag { Context, Removed, Added };

struct DiffLine {
  LineTag tag;
  std::string text;        // without the tag character or trailing newline
  bool no_newline = false; // "\ No newline at end of file" followed this line
};

struct Hunk {
  long old_start = 0; // 1-based; 0 for empty side
  long old_count = 0;
  long new_start = 0;
  long new_count = 0;
  std::vector<DiffLine> lines;
};

struct FileDiff {
  std::string old_path; // prefix-stripped; empty means /dev/null (creation)
  std::string new_path; // empty means /dev/null (deletion)
  bool is_binary = false;
  std::vector<Hunk> hunks;
  std::string raw; // the slice of the input covering this file's diff

  /// Repository path this diff is about (new side wins unless deleted).
  const std::string &path() const { return new_path.empty() ? old_path : new_path; }
};

/// Parses a unified diff, git extended headers included. Unrecognized text
/// between file sections is skipped; malformed hunks raise Error naming the
/// offending line number.
std::vector<FileDiff> parse_unified_diff(std::string_view text);

/// Applies hunks to `before`, verifying every context and removed line
/// byte-for-byte. Throws Error on the first mismatch.
std::string apply_hunks(std::string_view before, const std::vector<Hunk> &hunks);

/// Inverse of apply_hunks: reconstructs the old content from the new one.
std::string unapply_hunks(std::string_view after, const std::vector<Hunk> &hunks);

/// Produces a unified diff between two texts (LCS-based, `context` lines of
/// context). Returns an empty string when the texts are equal.
std::string make_unified_diff(std::string_view old_path, std::string_view new_path,
                              std::string_view before, std::string_view after,
                              int context = 3);

} // namespace fixprint::diff

#endif // FIXPRINT_DIFF_HPP
