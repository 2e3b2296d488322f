//===- util.cpp - shared plumbing ------------------------------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fixprint {

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad())
    throw Error("read failure: " + path.string());
  return std::move(buf).str();
}

bool write_file_if_changed(const std::filesystem::path &path,
                           std::string_view content) {
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::ostringstream buf;
      buf << in.rdbuf();
      if (buf.str() == content)
        return false;
    }
  }
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out)
    throw Error("write failure: " + path.string());
  return true;
}

bool looks_binary(std::string_view content) {
  const std::size_t probe = std::min<std::size_t>(content.size(), 8192);
  return content.substr(0, probe).find('\0') != std::string_view::npos;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(pos));
      break;
    }
    lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)> &fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n)
        return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  unsigned count = std::min<std::size_t>(workers, n);
  pool.reserve(count);
  for (unsigned t = 0; t < count; ++t)
    pool.emplace_back(worker);
  for (auto &t : pool)
    t.join();
}

} // namespace fixprint
