#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rdpkit/common.hpp"

namespace rdpkit {

/// Interned set of string tokens. Ids are dense and follow insertion order.
///
/// Tokens are non-empty and contain no whitespace, which keeps every text
/// format in the library line- and space-delimited.
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::vector<std::string> tokens);

  /// Builds an alphabet whose ids follow the lexicographic order of the tokens.
  static Alphabet sorted(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  const std::string& token(SymbolId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<SymbolId> find(std::string_view token) const;
  SymbolId at(std::string_view token) const;

  bool operator==(const Alphabet& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, SymbolId> index_;
};

/// Joins action, observation and reward tokens into a trace symbol `a:s:r`.
std::string join_triple(std::string_view action, std::string_view observation,
                        std::string_view reward);

struct TripleView {
  std::string_view action;
  std::string_view observation;
  std::string_view reward;
};

/// Splits `a:s:r`; returns nullopt unless there are exactly three non-empty parts.
std::optional<TripleView> split_triple(std::string_view symbol);

}  // namespace rdpkit
