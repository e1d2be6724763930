#!/usr/bin/env python3
"""Reference BLEU / ROUGE-L scorer and frozen-case generator.

Writes tests/data/metric_cases.json. Token 0 is <eos> and is dropped when it
ends a sentence. Re-run only when the case set itself should change.
"""
import json
import math
import random
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path

EOS = 0


def strip(sentence):
    return sentence[:-1] if sentence and sentence[-1] == EOS else list(sentence)


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, max_n):
    matched = [0] * max_n
    total = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(candidates, references):
        cand = strip(cand)
        refs = [strip(r) for r in refs]
        for n in range(1, max_n + 1):
            ceiling = Counter()
            for r in refs:
                ceiling |= ngram_counts(r, n)
            counts = ngram_counts(cand, n)
            matched[n - 1] += sum(min(k, ceiling[g]) for g, k in counts.items())
            total[n - 1] += sum(counts.values())
        c_len += len(cand)
        r_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
    if c_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(Fraction(m, t)) for m, t in zip(matched, total)) / max_n
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return bp * math.exp(log_p)


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            table[i + 1][j + 1] = table[i][j] + 1 if x == y else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def rouge_l(candidates, references):
    scores = []
    for cand, refs in zip(candidates, references):
        cand = strip(cand)
        best = 0.0
        for r in map(strip, refs):
            l = lcs(cand, r)
            if l:
                p, rc = Fraction(l, len(cand)), Fraction(l, len(r))
                best = max(best, float(2 * p * rc / (p + rc)))
        scores.append(best)
    return sum(scores) / len(scores)


def hand_cases():
    a, b, c = 3, 4, 5
    return [
        ("clipped unigram", [[a, a, a]], [[[a, b]]]),
        ("lcs f1", [[a, b, c]], [[[a, c]]]),
        ("identical", [[a, b, c, 6, EOS], [b, c, a, a]], [[[a, b, c, 6, EOS]], [[b, c, a, a], [a]]]),
        ("short candidate", [[a, b]], [[[a, b, c, 6], [a, b, c]]]),
        ("disjoint", [[a, b]], [[[c, 6]]]),
    ]


def random_case(rng):
    vocab = list(range(3, 3 + rng.randint(2, 8)))
    images = rng.randint(1, 5)
    cands, refs = [], []
    for _ in range(images):
        def sentence(lo):
            s = [rng.choice(vocab) for _ in range(rng.randint(lo, 12))]
            return s + [EOS] if rng.random() < 0.5 else s
        refs.append([sentence(1) for _ in range(rng.randint(1, 4))])
        cand = list(rng.choice(refs[-1])) if rng.random() < 0.4 else sentence(1)
        for i in range(len(cand)):
            if rng.random() < 0.2:
                cand[i] = rng.choice(vocab)
        cands.append(cand)
    return cands, refs


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "metric_cases.json"
    rng = random.Random(20240917)
    cases = [(name, c, r) for name, c, r in hand_cases()]
    while len(cases) < 50:
        c, r = random_case(rng)
        cases.append((f"random {len(cases)}", c, r))
    records = []
    for name, c, r in cases:
        records.append({
            "name": name,
            "candidates": c,
            "references": r,
            "bleu": [bleu(c, r, n) for n in range(1, 5)],
            "rouge_l": rouge_l(c, r),
        })
    out.write_text(json.dumps(records, indent=1) + "\n")


if __name__ == "__main__":
    main()
