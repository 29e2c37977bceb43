#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace rdpkit {

using StateId = std::uint32_t;
using SymbolId = std::uint32_t;

/// Marker for an undefined transition or an absent state.
inline constexpr StateId kNoState = std::numeric_limits<StateId>::max();
inline constexpr SymbolId kNoSymbol = std::numeric_limits<SymbolId>::max();

/// Tolerance used by every sum-to-one check on in-memory distributions.
inline constexpr double kProbabilityTolerance = 1e-9;

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rdpkit
