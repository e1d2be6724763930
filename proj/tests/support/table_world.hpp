#pragma once

// Hand-specified score tables for the decoder and a brute-force reference
// search over them.

#include <algorithm>
#include <any>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "lacap/decode/decoder.hpp"
#include "lacap/numcore/rng.hpp"

namespace lacap::testing {

using world::Sentence;
using world::TokenId;

// Hand-specified tables over prefixes: p(w | prefix) and v(prefix + w).
class TableScorer final : public decode::Scorer {
 public:
  TableScorer(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::any root() const override { return Sentence{}; }
  decode::Vec log_probs(const std::any& state) const override {
    const auto& prefix = std::any_cast<const Sentence&>(state);
    num::Rng rng = stream(prefix, 1);
    decode::Vec w(vocab_);
    double z = 0.0;
    for (auto& x : w) z += (x = 0.05 + rng.uniform());
    for (auto& x : w) x = std::log(x / z);
    return w;
  }
  decode::Vec extension_values(const std::any& state) const override {
    const auto& prefix = std::any_cast<const Sentence&>(state);
    decode::Vec v(vocab_);
    for (std::size_t w = 0; w < vocab_; ++w) {
      Sentence ext = prefix;
      ext.push_back(static_cast<TokenId>(w));
      v[w] = value(ext);
    }
    return v;
  }
  std::any advance(const std::any& state, TokenId word) const override {
    Sentence next = std::any_cast<const Sentence&>(state);
    next.push_back(word);
    return next;
  }
  double value(const Sentence& s) const { return stream(s, 2).uniform(-1, 1); }
  double logp(const Sentence& prefix, TokenId w) const { return log_probs(std::any(prefix))[w]; }

 private:
  num::Rng stream(const Sentence& s, std::uint64_t tag) const {
    std::uint64_t h = num::mix64(seed_ ^ tag);
    for (auto w : s) h = num::mix64(h ^ (w + 1));
    return num::Rng(h ^ s.size());
  }
  std::size_t vocab_;
  std::uint64_t seed_;
};

// Rescored from scratch along the path.
inline double path_score(const TableScorer& t, const Sentence& s, double lambda) {
  double total = 0.0;
  Sentence prefix;
  for (auto w : s) {
    total += lambda * t.logp(prefix, w);
    prefix.push_back(w);
    if (lambda < 1.0) total += (1.0 - lambda) * t.value(prefix);
  }
  return total;
}

// Brute force: extend every surviving prefix by every word, rescore each path
// from scratch, keep the best distinct ones.
inline std::vector<std::vector<Sentence>> brute_force_beams(const TableScorer& t, std::size_t beam, double lambda,
                                                     std::size_t max_len) {
  std::vector<std::vector<Sentence>> out;
  std::vector<Sentence> live{Sentence{}};
  std::size_t done = 0;
  for (std::size_t step = 0; step < max_len && !live.empty() && done < beam; ++step) {
    std::vector<std::pair<double, Sentence>> all;
    for (const auto& p : live)
      for (TokenId w = 0; w < t.vocab_size(); ++w) {
        Sentence s = p;
        s.push_back(w);
        all.emplace_back(path_score(t, s, lambda), s);
      }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    all.resize(std::min(all.size(), beam - done));
    std::vector<Sentence> kept, next;
    for (auto& [score, s] : all) {
      kept.push_back(s);
      if (s.back() == world::Vocab::kEos)
        ++done;
      else
        next.push_back(s);
    }
    out.push_back(kept);
    live = next;
  }
  return out;
}

}  // namespace lacap::testing
