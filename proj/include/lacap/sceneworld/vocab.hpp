#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lacap::world {

using TokenId = std::uint32_t;
using Sentence = std::vector<TokenId>;

/// Bijective token dictionary with reserved ids <eos>=0, <unk>=1, <pad>=2.
class Vocab {
 public:
  static constexpr TokenId kEos = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kPad = 2;

  Vocab();
  /// Adds `token` if new; returns its id either way.
  TokenId add(std::string_view token);
  /// Id of `token`, or kUnk.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  Sentence encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  std::string join(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace lacap::world
