//===- util.hpp - shared plumbing: errors, file IO, parallel map -*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_UTIL_HPP
#define FIXPRINT_UTIL_HPP

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fixprint {

/// Error type thrown by all fixprint operations.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path &path);

/// Writes only when content differs from what is on disk, so re-running a
/// stage on unchanged inputs leaves no trace. Returns true if bytes were
/// written.
bool write_file_if_changed(const std::filesystem::path &path,
                           std::string_view content);

/// NUL bytes in the first 8 KiB mark a blob as binary.
bool looks_binary(std::string_view content);

std::vector<std::string> split_lines(std::string_view text);

/// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written
/// to index-addressed slots by the caller; completion order is unspecified
/// but slot addressing keeps merged output independent of scheduling.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)> &fn);

} // namespace fixprint

#endif // FIXPRINT_UTIL_HPP
