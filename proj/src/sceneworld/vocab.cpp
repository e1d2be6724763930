#include "lacap/sceneworld/vocab.hpp"

namespace lacap::world {

Vocab::Vocab() {
  add("<eos>");
  add("<unk>");
  add("<pad>");
}

TokenId Vocab::add(std::string_view token) {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

Sentence Vocab::encode(std::span<const std::string> words) const {
  Sentence out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(i < tokens_.size() ? tokens_[i] : tokens_[kUnk]);
  return out;
}

std::string Vocab::join(std::span<const TokenId> ids) const {
  std::string s;
  for (auto i : ids) {
    if (!s.empty()) s += ' ';
    s += i < tokens_.size() ? tokens_[i] : tokens_[kUnk];
  }
  return s;
}

}  // namespace lacap::world
