#include "lacap/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace lacap::eval {

namespace {

using Span = std::span<const world::TokenId>;
using NgramCounts = std::map<std::vector<world::TokenId>, std::size_t>;

Span strip(const Sentence& s) {
  Span v(s);
  if (!v.empty() && v.back() == world::Vocab::kEos) v = v.first(v.size() - 1);
  return v;
}

NgramCounts ngrams(Span s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[std::vector<world::TokenId>(s.begin() + i, s.begin() + i + n)];
  return out;
}

void check_inputs(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references) {
  if (candidates.empty()) throw std::invalid_argument("metric: empty candidate set");
  if (candidates.size() != references.size())
    throw std::invalid_argument("metric: candidates and reference sets differ in count");
  for (const auto& refs : references)
    if (refs.empty()) throw std::invalid_argument("metric: an image has no references");
}

struct BleuStats {
  std::array<double, 4> matched{};
  std::array<double, 4> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
};

BleuStats collect(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references,
                  std::size_t max_n) {
  BleuStats st;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Span cand = strip(candidates[i]);
    std::vector<Span> refs;
    for (const auto& r : references[i]) refs.push_back(strip(r));
    for (std::size_t n = 1; n <= max_n; ++n) {
      const NgramCounts c = ngrams(cand, n);
      NgramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : c) {
        const auto it = max_ref.find(g);
        st.matched[n - 1] += static_cast<double>(std::min(k, it == max_ref.end() ? 0 : it->second));
        st.total[n - 1] += static_cast<double>(k);
      }
    }
    // closest reference length, shorter on ties
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    st.cand_len += static_cast<double>(cand.size());
    st.ref_len += static_cast<double>(best);
  }
  return st;
}

double combine(const BleuStats& st, std::size_t n) {
  if (st.cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (st.total[k] == 0.0 || st.matched[k] == 0.0) return 0.0;
    log_sum += std::log(st.matched[k] / st.total[k]);
  }
  const double bp = st.cand_len > st.ref_len ? 1.0 : std::exp(1.0 - st.ref_len / st.cand_len);
  return bp * std::exp(log_sum / static_cast<double>(n));
}

}  // namespace

double corpus_bleu(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references,
                   std::size_t n) {
  check_inputs(candidates, references);
  if (n < 1 || n > 4) throw std::invalid_argument("corpus_bleu: order must be 1..4");
  return combine(collect(candidates, references, n), n);
}

std::array<double, 4> corpus_bleu_all(std::span<const Sentence> candidates,
                                      std::span<const std::vector<Sentence>> references) {
  check_inputs(candidates, references);
  const BleuStats st = collect(candidates, references, 4);
  return {combine(st, 1), combine(st, 2), combine(st, 3), combine(st, 4)};
}

std::size_t lcs_length(std::span<const world::TokenId> a, std::span<const world::TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double sentence_rouge_l(const Sentence& candidate, std::span<const Sentence> references) {
  if (references.empty()) throw std::invalid_argument("rouge_l: no references");
  const Span cand = strip(candidate);
  double best = 0.0;
  for (const auto& r : references) {
    const Span ref = strip(r);
    const std::size_t l = lcs_length(cand, ref);
    if (l == 0) continue;
    const double p = static_cast<double>(l) / static_cast<double>(cand.size());
    const double rc = static_cast<double>(l) / static_cast<double>(ref.size());
    best = std::max(best, 2.0 * p * rc / (p + rc));
  }
  return best;
}

double rouge_l(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references) {
  check_inputs(candidates, references);
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += sentence_rouge_l(candidates[i], references[i]);
  return total / static_cast<double>(candidates.size());
}

}  // namespace lacap::eval
