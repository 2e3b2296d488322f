//===- diff.cpp - unified diff parsing, application, generation ------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/diff.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <charconv>
#include <optional>
#include <sstream>

namespace fixprint::diff {

namespace {

struct LineCursor {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line_no = 0; // 1-based number of the line returned last

  bool eof() const { return pos >= text.size(); }

  std::string_view peek() const {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos)
      return text.substr(pos);
    return text.substr(pos, nl - pos);
  }

  std::string_view next() {
    std::string_view line = peek();
    pos += line.size();
    if (pos < text.size())
      ++pos; // the newline
    ++line_no;
    return line;
  }
};

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::string strip_diff_path(std::string_view raw) {
  // "--- a/path\toptional timestamp" -> "path"; /dev/null -> "".
  std::size_t tab = raw.find('\t');
  std::string_view p = tab == std::string_view::npos ? raw : raw.substr(0, tab);
  if (p == "/dev/null")
    return {};
  if (starts_with(p, "a/") || starts_with(p, "b/"))
    p = p.substr(2);
  return std::string(p);
}

std::optional<long> parse_long(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

// Parses "-l[,c]" or "+l[,c]".
bool parse_range(std::string_view s, char sign, long &start, long &count) {
  if (s.empty() || s[0] != sign)
    return false;
  s.remove_prefix(1);
  std::size_t comma = s.find(',');
  std::optional<long> l, c;
  if (comma == std::string_view::npos) {
    l = parse_long(s);
    c = 1;
  } else {
    l = parse_long(s.substr(0, comma));
    c = parse_long(s.substr(comma + 1));
  }
  if (!l || !c || *l < 0 || *c < 0)
    return false;
  start = *l;
  count = *c;
  return true;
}

bool parse_hunk_header(std::string_view line, Hunk &h) {
  // "@@ -l,c +l,c @@ optional"
  if (!starts_with(line, "@@ "))
    return false;
  std::size_t close = line.find(" @@", 3);
  if (close == std::string_view::npos)
    return false;
  std::string_view ranges = line.substr(3, close - 3);
  std::size_t space = ranges.find(' ');
  if (space == std::string_view::npos)
    return false;
  return parse_range(ranges.substr(0, space), '-', h.old_start, h.old_count) &&
         parse_range(ranges.substr(space + 1), '+', h.new_start, h.new_count);
}

struct SplitText {
  std::vector<std::string> lines;
  bool final_newline = true; // vacuously true for empty text
};

SplitText split_keep(std::string_view text) {
  SplitText out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.lines.emplace_back(text.substr(pos));
      out.final_newline = false;
      break;
    }
    out.lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

std::string join(const std::vector<std::string> &lines, bool final_newline) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += lines[i];
    if (i + 1 < lines.size() || final_newline)
      out += '\n';
  }
  return out;
}

// Shared core of apply/unapply; `forward` selects which side is consumed.
std::string apply_direction(std::string_view input, const std::vector<Hunk> &hunks,
                            bool forward) {
  SplitText src = split_keep(input);
  std::vector<std::string> out;
  bool out_final_newline = true;
  bool out_newline_pinned = false;
  std::size_t src_idx = 0; // 0-based index into src.lines

  const LineTag consume_tag = forward ? LineTag::Removed : LineTag::Added;
  const LineTag emit_tag = forward ? LineTag::Added : LineTag::Removed;

  for (std::size_t hi = 0; hi < hunks.size(); ++hi) {
    const Hunk &h = hunks[hi];
    long start = forward ? h.old_start : h.new_start;
    std::size_t target = start > 0 ? static_cast<std::size_t>(start - 1) : 0;
    if (target < src_idx)
      throw Error("hunk " + std::to_string(hi + 1) + " overlaps previous hunk");
    if (target > src.lines.size())
      throw Error("hunk " + std::to_string(hi + 1) + " starts beyond end of input");
    while (src_idx < target)
      out.push_back(src.lines[src_idx++]);

    for (const DiffLine &dl : h.lines) {
      if (dl.tag == LineTag::Context || dl.tag == consume_tag) {
        if (src_idx >= src.lines.size())
          throw Error("hunk " + std::to_string(hi + 1) +
                      " runs past end of input");
        if (src.lines[src_idx] != dl.text)
          throw Error("hunk " + std::to_string(hi + 1) + " mismatch at line " +
                      std::to_string(src_idx + 1) + ": expected \"" + dl.text +
                      "\", found \"" + src.lines[src_idx] + "\"");
        ++src_idx;
      }
      if (dl.tag == LineTag::Context || dl.tag == emit_tag) {
        out.push_back(dl.text);
        if (dl.no_newline && (dl.tag == LineTag::Context || dl.tag == emit_tag)) {
          // Marker speaks about the side it appears on; for the output side it
          // pins the final newline of the produced text.
          if (dl.tag == emit_tag || dl.tag == LineTag::Context) {
            out_final_newline = false;
            out_newline_pinned = true;
          }
        }
      }
      if (dl.no_newline && dl.tag == consume_tag) {
        // Consumed side must indeed lack its final newline here.
        if (src_idx != src.lines.size() || src.final_newline)
          throw Error("hunk " + std::to_string(hi + 1) +
                      " claims missing final newline but input has one");
      }
    }
  }
  // Copy the unchanged tail.
  bool copied_tail = src_idx < src.lines.size();
  while (src_idx < src.lines.size())
    out.push_back(src.lines[src_idx++]);
  if (copied_tail || !out_newline_pinned) {
    // Tail (or untouched trailing line) inherits the source's final newline,
    // unless the diff explicitly pinned it.
    if (copied_tail)
      out_final_newline = src.final_newline;
    else if (!out_newline_pinned)
      out_final_newline = out.empty() ? true : src.final_newline;
  }
  return join(out, out_final_newline);
}

} // namespace

std::vector<FileDiff> parse_unified_diff(std::string_view text) {
  std::vector<FileDiff> files;
  LineCursor cur{text};

  std::optional<FileDiff> current;
  std::size_t current_begin = 0;
  std::string pending_old_path;
  bool have_old_path = false;

  auto flush = [&](std::size_t end_pos) {
    if (current) {
      current->raw = std::string(text.substr(current_begin, end_pos - current_begin));
      files.push_back(std::move(*current));
      current.reset();
    }
    have_old_path = false;
  };

  while (!cur.eof()) {
    std::size_t line_begin = cur.pos;
    std::string_view line = cur.next();

    if (starts_with(line, "diff ")) {
      flush(line_begin);
      current_begin = line_begin;
      continue;
    }
    if (starts_with(line, "Binary files ") || starts_with(line, "GIT binary patch")) {
      if (current && (current->is_binary || !current->hunks.empty() ||
                      !current->new_path.empty()))
        flush(line_begin);
      if (!current) {
        current.emplace();
        current_begin = line_begin;
      }
      current->is_binary = true;
      if (starts_with(line, "Binary files ")) {
        // "Binary files a/X and b/Y differ"
        std::string_view rest = line.substr(13);
        std::size_t and_pos = rest.find(" and ");
        std::size_t differ_pos = rest.rfind(" differ");
        if (and_pos != std::string_view::npos && differ_pos != std::string_view::npos &&
            differ_pos > and_pos) {
          current->old_path = strip_diff_path(rest.substr(0, and_pos));
          current->new_path =
              strip_diff_path(rest.substr(and_pos + 5, differ_pos - and_pos - 5));
        }
      }
      continue;
    }
    if (starts_with(line, "--- ")) {
      if (current && (current->is_binary || !current->hunks.empty()))
        flush(line_begin);
      pending_old_path = strip_diff_path(line.substr(4));
      have_old_path = true;
      if (!current)
        current_begin = line_begin;
      continue;
    }
    if (starts_with(line, "+++ ")) {
      if (!have_old_path)
        throw Error("line " + std::to_string(cur.line_no) +
                    ": '+++' header without preceding '---'");
      if (!current)
        current.emplace();
      current->old_path = pending_old_path;
      current->new_path = strip_diff_path(line.substr(4));
      have_old_path = false;
      continue;
    }
    if (starts_with(line, "@@")) {
      if (!current || (current->old_path.empty() && current->new_path.empty() &&
                       current->hunks.empty() && !current->is_binary))
        throw Error("line " + std::to_string(cur.line_no) +
                    ": hunk header outside a file section");
      Hunk h;
      if (!parse_hunk_header(line, h))
        throw Error("line " + std::to_string(cur.line_no) +
                    ": malformed hunk header \"" + std::string(line) + "\"");
      long need_old = h.old_count;
      long need_new = h.new_count;
      while (need_old > 0 || need_new > 0) {
        if (cur.eof())
          throw Error("line " + std::to_string(cur.line_no) +
                      ": hunk truncated (expected " + std::to_string(need_old) +
                      " more old / " + std::to_string(need_new) + " more new lines)");
        std::string_view body = cur.next();
        if (starts_with(body, "\\")) {
          if (h.lines.empty())
            throw Error("line " + std::to_string(cur.line_no) +
                        ": newline marker before any hunk line");
          h.lines.back().no_newline = true;
          continue;
        }
        char tag = body.empty() ? ' ' : body[0];
        std::string_view rest = body.empty() ? body : body.substr(1);
        switch (tag) {
        case ' ':
          h.lines.push_back({LineTag::Context, std::string(rest), false});
          --need_old;
          --need_new;
          break;
        case '-':
          h.lines.push_back({LineTag::Removed, std::string(rest), false});
          --need_old;
          break;
        case '+':
          h.lines.push_back({LineTag::Added, std::string(rest), false});
          --need_new;
          break;
        default:
          throw Error("line " + std::to_string(cur.line_no) +
                      ": unexpected line inside hunk: \"" + std::string(body) + "\"");
        }
        if (need_old < 0 || need_new < 0)
          throw Error("line " + std::to_string(cur.line_no) +
                      ": hunk body exceeds declared counts");
      }
      // A trailing newline marker may follow the last body line.
      if (!cur.eof() && starts_with(cur.peek(), "\\")) {
        cur.next();
        if (!h.lines.empty())
          h.lines.back().no_newline = true;
      }
      current->hunks.push_back(std::move(h));
      continue;
    }
    // Git extended headers and inter-file noise: keep scanning.
  }
  flush(text.size());

  // Drop an empty trailing shell that never got headers or hunks.
  std::erase_if(files, [](const FileDiff &f) {
    return f.old_path.empty() && f.new_path.empty() && f.hunks.empty() && !f.is_binary;
  });
  return files;
}

std::string apply_hunks(std::string_view before, const std::vector<Hunk> &hunks) {
  return apply_direction(before, hunks, true);
}

std::string unapply_hunks(std::string_view after, const std::vector<Hunk> &hunks) {
  return apply_direction(after, hunks, false);
}

namespace {

// Longest common subsequence table over line vectors; small inputs only.
std::vector<std::pair<std::size_t, std::size_t>>
lcs_pairs(const std::vector<std::string> &a, const std::vector<std::string> &b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::uint32_t>> dp(n + 1,
                                             std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      dp[i][j] = a[i] == b[j] ? dp[i + 1][j + 1] + 1
                              : std::max(dp[i + 1][j], dp[i][j + 1]);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      pairs.emplace_back(i, j);
      ++i, ++j;
    } else if (dp[i + 1][j] >= dp[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  return pairs;
}

} // namespace

std::string make_unified_diff(std::string_view old_path, std::string_view new_path,
                              std::string_view before, std::string_view after,
                              int context) {
  if (before == after)
    return {};
  SplitText a = split_keep(before);
  SplitText b = split_keep(after);
  auto common = lcs_pairs(a.lines, b.lines);

  // Edit regions between consecutive common pairs.
  struct Region {
    std::size_t a_begin, a_end, b_begin, b_end;
  };
  std::vector<Region> regions;
  std::size_t ai = 0, bi = 0;
  for (auto [ci, cj] : common) {
    if (ci > ai || cj > bi)
      regions.push_back({ai, ci, bi, cj});
    ai = ci + 1;
    bi = cj + 1;
  }
  if (ai < a.lines.size() || bi < b.lines.size())
    regions.push_back({ai, a.lines.size(), bi, b.lines.size()});
  // A final-newline-only change shows up as an edit of the last line.
  if (regions.empty() && a.final_newline != b.final_newline && !a.lines.empty()) {
    regions.push_back({a.lines.size() - 1, a.lines.size(), b.lines.size() - 1,
                       b.lines.size()});
  }

  std::ostringstream out;
  out << "--- " << (before.empty() && !after.empty() ? "/dev/null"
                                                     : "a/" + std::string(old_path))
      << "\n";
  out << "+++ " << (after.empty() && !before.empty() ? "/dev/null"
                                                     : "b/" + std::string(new_path))
      << "\n";

  std::size_t r = 0;
  while (r < regions.size()) {
    // Merge regions whose context windows touch.
    std::size_t hunk_a_begin =
        regions[r].a_begin > static_cast<std::size_t>(context)
            ? regions[r].a_begin - context
            : 0;
    std::size_t last = r;
    while (last + 1 < regions.size() &&
           regions[last + 1].a_begin <= regions[last].a_end + 2 * context)
      ++last;
    std::size_t hunk_a_end =
        std::min(a.lines.size(), regions[last].a_end + context);
    std::size_t hunk_b_begin =
        regions[r].b_begin - (regions[r].a_begin - hunk_a_begin);

    std::ostringstream body;
    long old_count = 0, new_count = 0;
    std::size_t pa = hunk_a_begin, pb = hunk_b_begin;
    auto emit = [&](char tag, const std::string &line, bool last_old, bool last_new) {
      body << tag << line << "\n";
      bool no_nl = (tag != '+' && last_old && !a.final_newline) ||
                   (tag != '-' && last_new && !b.final_newline);
      if (no_nl)
        body << "\\ No newline at end of file\n";
    };
    for (std::size_t k = r; k <= last; ++k) {
      while (pa < regions[k].a_begin) {
        emit(' ', a.lines[pa], pa + 1 == a.lines.size(), pb + 1 == b.lines.size());
        ++pa, ++pb, ++old_count, ++new_count;
      }
      for (std::size_t x = regions[k].a_begin; x < regions[k].a_end; ++x) {
        emit('-', a.lines[x], x + 1 == a.lines.size(), false);
        ++old_count;
      }
      for (std::size_t y = regions[k].b_begin; y < regions[k].b_end; ++y) {
        emit('+', b.lines[y], false, y + 1 == b.lines.size());
        ++new_count;
      }
      pa = regions[k].a_end;
      pb = regions[k].b_end;
    }
    while (pa < hunk_a_end) {
      emit(' ', a.lines[pa], pa + 1 == a.lines.size(), pb + 1 == b.lines.size());
      ++pa, ++pb, ++old_count, ++new_count;
    }

    out << "@@ -" << (old_count == 0 ? hunk_a_begin : hunk_a_begin + 1) << ","
        << old_count << " +" << (new_count == 0 ? hunk_b_begin : hunk_b_begin + 1)
        << "," << new_count << " @@\n";
    out << body.str();
    r = last + 1;
  }
  return out.str();
}

} // namespace fixprint::diff
