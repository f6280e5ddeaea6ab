"""Word-level edit counting between a source quote and its remix.

Both texts are normalized and aligned on a longest common subsequence. Every
maximal run of unmatched words (on either side) between two consecutive
matches is one edit span. Several LCS alignments can exist; we take the one
with the fewest spans, breaking further ties toward the leftmost match.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .model import normalize_words

SPAN = "span"
WORD = "word"


@dataclass(frozen=True)
class EditSpan:
    original: tuple[str, ...]
    replacement: tuple[str, ...]
    original_start: int
    replacement_start: int

    @property
    def width(self) -> int:
        return max(len(self.original), len(self.replacement))


@dataclass(frozen=True)
class EditResult:
    count: int
    spans: tuple[EditSpan, ...]
    matched_remix_positions: frozenset[int]


def _lcs_table(a: Sequence[str], b: Sequence[str]) -> list[list[int]]:
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                table[i][j] = table[i + 1][j + 1] + 1
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])
    return table


def align(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    """Matched index pairs of the minimal-span LCS alignment of ``a`` and ``b``."""
    n, m = len(a), len(b)
    lcs = _lcs_table(a, b)

    @lru_cache(maxsize=None)
    def best(i: int, j: int) -> tuple[int, tuple[tuple[int, int], ...]]:
        # fewest gaps for suffixes a[i:], b[j:] given a match boundary at (i, j)
        if lcs[i][j] == 0:
            return (1 if i < n or j < m else 0), ()
        target = lcs[i][j]
        choice = None
        for p in range(i, n):
            for q in range(j, m):
                if a[p] != b[q] or lcs[p + 1][q + 1] + 1 != target:
                    continue
                rest, path = best(p + 1, q + 1)
                cost = rest + (1 if p > i or q > j else 0)
                if choice is None or cost < choice[0]:
                    choice = (cost, ((p, q),) + path)
        return choice

    return list(best(0, 0)[1])


def spans_from_alignment(a: Sequence[str], b: Sequence[str],
                         matches: Sequence[tuple[int, int]]) -> list[EditSpan]:
    spans = []
    pi, pj = 0, 0
    for i, j in list(matches) + [(len(a), len(b))]:
        if i > pi or j > pj:
            spans.append(EditSpan(tuple(a[pi:i]), tuple(b[pj:j]), pi, pj))
        pi, pj = i + 1, j + 1
    return spans


def word_edit_count(original: str, remix: str, unit: str = SPAN) -> EditResult:
    """Count modifications turning ``original`` into ``remix``.

    With ``unit="span"`` each contiguous differing span counts once
    ("New York" -> "DKNY" is one edit). With ``unit="word"`` a span counts
    as many edits as its wider side.
    """
    if unit not in (SPAN, WORD):
        raise ValueError(f"unit must be {SPAN!r} or {WORD!r}")
    a, b = normalize_words(original), normalize_words(remix)
    matches = align(a, b)
    spans = spans_from_alignment(a, b, matches)
    count = len(spans) if unit == SPAN else sum(s.width for s in spans)
    return EditResult(count, tuple(spans), frozenset(j for _, j in matches))
