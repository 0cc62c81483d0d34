#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ftaed/errors.hpp"

namespace ftaed::csv {

// Line-oriented reader for the simple comma-separated schemas used here:
// no quoting, `\n` line endings (a trailing `\r` is stripped), empty field
// means "missing".

inline std::vector<std::string_view> split_fields(std::string_view line,
                                                  std::vector<std::string_view>& out) {
  out.clear();
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double_field(std::string_view f) {
  if (f.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size()) {
    fail(ErrorKind::MalformedRow, "not a number: '" + std::string(f) + "'");
  }
  return v;
}

inline std::optional<std::int64_t> parse_int_field(std::string_view f) {
  if (f.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size()) {
    fail(ErrorKind::MalformedRow, "not an integer: '" + std::string(f) + "'");
  }
  return v;
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path) {
    if (!in_) fail(ErrorKind::IoError, "cannot open " + path);
    path_ = path;
  }

  // Returns false at end of input. Skips nothing; blank lines are returned
  // as empty strings so callers can decide.
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_number_;
    return true;
  }

  int line_number() const { return line_number_; }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  int line_number_ = 0;
};

}  // namespace ftaed::csv
