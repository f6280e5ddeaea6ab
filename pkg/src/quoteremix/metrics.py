"""Set-level diversity metrics for short texts.

All functions accept either a :class:`~quoteremix.model.SloganSet` or a plain
sequence of strings. Texts are tokenized with
:func:`~quoteremix.model.normalize_words` so the numbers line up with the
edit counter used during generation.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence, Union

from .model import SloganSet, normalize_words

MAX_ORDER = 4
EPSILON = 0.1

Texts = Union[SloganSet, Sequence[str]]


def _tokenized(texts: Texts) -> list[list[str]]:
    if isinstance(texts, SloganSet):
        texts = texts.texts
    return [normalize_words(t) for t in texts]


def ngrams(words: Sequence[str], n: int) -> Counter:
    """Multiset of the ``n``-grams of ``words``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def distinct_n(texts: Texts, n: int = 2) -> float:
    """Unique n-gram types across the set divided by total n-gram tokens."""
    sents = _tokenized(texts)
    if not sents:
        raise ValueError("distinct-n of an empty set is undefined")
    types: set = set()
    total = 0
    for i, words in enumerate(sents):
        if len(words) < n:
            raise ValueError(f"text {i} has {len(words)} words; distinct-{n} needs at least {n}")
        grams = ngrams(words, n)
        types.update(grams)
        total += sum(grams.values())
    return len(types) / total


def distinct2(texts: Texts) -> float:
    return distinct_n(texts, 2)


def _closest_ref_length(hyp_len: int, references: Sequence[Sequence[str]]) -> int:
    return min((len(r) for r in references), key=lambda r: (abs(r - hyp_len), r))


def sentence_bleu(hypothesis: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    """Sentence BLEU of a tokenized hypothesis against tokenized references.

    Orders 1..min(4, len(hypothesis)) with uniform weights; counts are
    clipped against the per-n-gram maximum over references. A zero
    precision is replaced with ``EPSILON / (number of hypothesis n-grams)``.
    The brevity penalty uses the closest reference length (shorter wins ties).
    """
    if not hypothesis:
        raise ValueError("hypothesis must be non-empty")
    references = [r for r in references if r]
    if not references:
        raise ValueError("at least one non-empty reference is required")

    c = len(hypothesis)
    max_order = min(MAX_ORDER, c)
    log_sum = 0.0
    for n in range(1, max_order + 1):
        hyp_counts = ngrams(hypothesis, n)
        max_ref: Counter = Counter()
        for ref in references:
            max_ref |= ngrams(ref, n)
        clipped = sum(min(cnt, max_ref[g]) for g, cnt in hyp_counts.items())
        total = c - n + 1
        p = clipped / total if clipped else EPSILON / total
        log_sum += math.log(p) / max_order

    r = _closest_ref_length(c, references)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_sum)


def _require_pairs(sents: list) -> None:
    if len(sents) < 2:
        raise ValueError("BLEU-based diversity needs at least two texts")


def pairwise_bleu(texts: Texts) -> float:
    """Mean symmetrized BLEU over all unordered pairs."""
    sents = _tokenized(texts)
    _require_pairs(sents)
    scores = [
        (sentence_bleu(a, [b]) + sentence_bleu(b, [a])) / 2
        for a, b in combinations(sents, 2)
    ]
    return math.fsum(scores) / len(scores)


def self_bleu(texts: Texts) -> float:
    """Mean BLEU of each text against all the others as joint references."""
    sents = _tokenized(texts)
    _require_pairs(sents)
    scores = [
        sentence_bleu(hyp, sents[:i] + sents[i + 1 :])
        for i, hyp in enumerate(sents)
    ]
    return math.fsum(scores) / len(scores)


def aggregate_cells(values: Iterable[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    values = list(values)
    if not values:
        raise ValueError("cannot aggregate an empty list")
    return statistics.fmean(values), statistics.pstdev(values)


@dataclass(frozen=True)
class DiversityScores:
    distinct2: float
    pairwise_bleu: float
    self_bleu: float
    n: int


def diversity_scores(texts: Texts) -> DiversityScores:
    sents = texts.texts if isinstance(texts, SloganSet) else list(texts)
    return DiversityScores(
        distinct2=distinct2(sents),
        pairwise_bleu=pairwise_bleu(sents),
        self_bleu=self_bleu(sents),
        n=len(sents),
    )
