"""Deliberately naive reference implementations used as test oracles.

Nothing here imports the metric or edit code under test; tokenization is
the only shared piece.
"""

from __future__ import annotations

import functools
import itertools
import math
import random

from quoteremix.model import normalize_words

VOCAB = "stay hungry bold fear the only thing is coming never sleeps joy".split()


def random_set(rng: random.Random, n_max=6, len_max=8, len_min=2, n_min=2, vocab=VOCAB):
    n = rng.randint(n_min, n_max)
    return [" ".join(rng.choice(vocab) for _ in range(rng.randint(len_min, len_max)))
            for _ in range(n)]


def grams(words, n):
    return [tuple(words[i:i + n]) for i in range(len(words) - n + 1)]


def distinct2(texts):
    seen, total = [], 0
    for t in texts:
        for g in grams(normalize_words(t), 2):
            total += 1
            if g not in seen:
                seen.append(g)
    return len(seen) / total


def bleu(hyp, refs):
    c = len(hyp)
    order = min(4, c)
    logs = 0.0
    for n in range(1, order + 1):
        hyp_grams = grams(hyp, n)
        matched = 0
        for g in set(hyp_grams):
            best = max(grams(r, n).count(g) for r in refs)
            matched += min(hyp_grams.count(g), best)
        p = matched / len(hyp_grams) if matched else 0.1 / len(hyp_grams)
        logs += math.log(p) / order
    lengths = sorted(len(r) for r in refs)
    r = min(lengths, key=lambda x: abs(x - c))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(logs)


def pairwise_bleu(texts):
    toks = [normalize_words(t) for t in texts]
    scores = []
    for i in range(len(toks)):
        for j in range(i + 1, len(toks)):
            scores.append((bleu(toks[i], [toks[j]]) + bleu(toks[j], [toks[i]])) / 2)
    return math.fsum(scores) / len(scores)


def self_bleu(texts):
    toks = [normalize_words(t) for t in texts]
    scores = []
    for i in range(len(toks)):
        others = [toks[j] for j in range(len(toks)) if j != i]
        scores.append(bleu(toks[i], others))
    return math.fsum(scores) / len(scores)


def two_pass(values):
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def _lcs_len(a, b):
    @functools.lru_cache(maxsize=None)
    def f(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + f(i + 1, j + 1)
        return max(f(i + 1, j), f(i, j + 1))
    return f(0, 0)


def _embeddings(sub, b, start):
    if not sub:
        yield ()
        return
    for j in range(start, len(b)):
        if b[j] == sub[0]:
            for rest in _embeddings(sub[1:], b, j + 1):
                yield (j,) + rest


def random_pair(rng: random.Random, max_len=10, vocab=VOCAB[:6]):
    """A sentence and a randomly mutated copy, both at most ``max_len`` words."""
    a = [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]
    b = list(a)
    for _ in range(rng.randint(0, 4)):
        op = rng.choice("sid")
        pos = rng.randint(0, len(b))
        if op == "s" and pos < len(b):
            b[pos] = rng.choice(vocab + ["dkny", "ge"])
        elif op == "i" and len(b) < max_len:
            b.insert(pos, rng.choice(vocab + ["dkny", "ge"]))
        elif op == "d" and pos < len(b) and len(b) > 1:
            del b[pos]
    return " ".join(a), " ".join(b)


def min_span_count(original: str, remix: str) -> int:
    """Fewest differing spans over every maximum common subsequence alignment,
    found by enumerating index subsets of ``original`` and their embeddings in ``remix``."""
    a, b = normalize_words(original), normalize_words(remix)
    k = _lcs_len(tuple(a), tuple(b))
    best = None
    for ia in itertools.combinations(range(len(a)), k):
        sub = [a[i] for i in ia]
        for ib in _embeddings(sub, b, 0):
            spans = 0
            prev_i, prev_j = -1, -1
            for i, j in list(zip(ia, ib)) + [(len(a), len(b))]:
                if i - prev_i > 1 or j - prev_j > 1:
                    spans += 1
                prev_i, prev_j = i, j
            best = spans if best is None else min(best, spans)
    return best
