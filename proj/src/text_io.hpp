#pragma once

// Shared helpers for the line-oriented text formats. Not installed.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "rdpkit/alphabet.hpp"
#include "rdpkit/common.hpp"

namespace rdpkit::text {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-blank, non-comment line split on whitespace; false at end of input.
  bool next(std::vector<std::string>& words) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream split(line);
      words.clear();
      for (std::string w; split >> w;) words.push_back(std::move(w));
      if (!words.empty()) return true;
    }
    ++line_no_;
    return false;
  }

  std::size_t line() const noexcept { return line_no_; }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_no_, what); }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::vector<std::string> expect_list(LineReader& reader, const char* key) {
  std::vector<std::string> words;
  if (!reader.next(words)) reader.fail(std::string("unexpected end of file; expected '") + key + "'");
  if (words[0] != key) reader.fail(std::string("expected '") + key + "', found '" + words[0] + "'");
  words.erase(words.begin());
  return words;
}

inline std::string expect_value(LineReader& reader, const char* key) {
  auto values = expect_list(reader, key);
  if (values.size() != 1) reader.fail(std::string("'") + key + "' takes exactly one value");
  return values[0];
}

template <class T>
T parse_number(LineReader& reader, const std::string& text, const char* what) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value) || !in.eof()) reader.fail(std::string("invalid ") + what + " '" + text + "'");
  return value;
}

inline double parse_probability(LineReader& reader, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || !std::isfinite(v)) {
    reader.fail("invalid probability '" + text + "'");
  }
  if (v < 0.0 || v > 1.0) reader.fail("probability " + text + " out of [0,1]");
  return v;
}

inline Alphabet make_alphabet(LineReader& reader, std::vector<std::string> tokens, const char* what) {
  try {
    return Alphabet(std::move(tokens));
  } catch (const Error& e) {
    reader.fail(std::string(what) + ": " + e.what());
  }
}

}  // namespace rdpkit::text
