#include "rdpkit/alphabet.hpp"

#include <algorithm>
#include <cctype>

namespace rdpkit {

namespace {

bool valid_token(std::string_view token) {
  if (token.empty()) return false;
  return std::none_of(token.begin(), token.end(),
                      [](unsigned char c) { return std::isspace(c) != 0 || c == '#'; });
}

}  // namespace

Alphabet::Alphabet(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (SymbolId i = 0; i < tokens_.size(); ++i) {
    if (!valid_token(tokens_[i])) throw Error("invalid token '" + tokens_[i] + "'");
    if (!index_.emplace(tokens_[i], i).second) {
      throw Error("duplicate token '" + tokens_[i] + "'");
    }
  }
}

Alphabet Alphabet::sorted(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return Alphabet(std::move(tokens));
}

std::optional<SymbolId> Alphabet::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SymbolId Alphabet::at(std::string_view token) const {
  auto id = find(token);
  if (!id) throw Error("unknown token '" + std::string(token) + "'");
  return *id;
}

std::string join_triple(std::string_view action, std::string_view observation,
                        std::string_view reward) {
  std::string out;
  out.reserve(action.size() + observation.size() + reward.size() + 2);
  out.append(action).append(":").append(observation).append(":").append(reward);
  return out;
}

std::optional<TripleView> split_triple(std::string_view symbol) {
  auto first = symbol.find(':');
  if (first == std::string_view::npos) return std::nullopt;
  auto second = symbol.find(':', first + 1);
  if (second == std::string_view::npos) return std::nullopt;
  if (symbol.find(':', second + 1) != std::string_view::npos) return std::nullopt;
  TripleView view{symbol.substr(0, first), symbol.substr(first + 1, second - first - 1),
                  symbol.substr(second + 1)};
  if (view.action.empty() || view.observation.empty() || view.reward.empty()) {
    return std::nullopt;
  }
  return view;
}

}  // namespace rdpkit
