#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "lacap/sceneworld/vocab.hpp"

namespace lacap::eval {

using world::Sentence;

/// Corpus BLEU-n with per-reference clipping, uniform weights over orders
/// 1..n and a brevity penalty against the closest reference length.
/// A trailing <eos> is ignored on every sentence.
double corpus_bleu(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references,
                   std::size_t n);

/// BLEU-1..4 in one pass.
std::array<double, 4> corpus_bleu_all(std::span<const Sentence> candidates,
                                      std::span<const std::vector<Sentence>> references);

/// Longest common subsequence length.
std::size_t lcs_length(std::span<const world::TokenId> a, std::span<const world::TokenId> b);

/// Sentence ROUGE-L F1 against the best-matching reference.
double sentence_rouge_l(const Sentence& candidate, std::span<const Sentence> references);

/// Mean of sentence_rouge_l over the corpus.
double rouge_l(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references);

}  // namespace lacap::eval
