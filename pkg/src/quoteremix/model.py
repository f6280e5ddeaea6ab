"""Shared domain types for slogan remixing.

Everything here is immutable and free of I/O. Validation happens at
construction time except for :class:`QuoteSegmentation`, which is checked
explicitly by :func:`validate_segmentation` so that parsers can report
*why* a segmentation is bad.
"""

from __future__ import annotations

import unicodedata
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

DOMAINS = (
    "beauty",
    "baby",
    "appliance",
    "clothing",
    "furniture",
    "household",
    "nutrition",
    "electronics",
)

PERSONAS = ("Pride", "Anticipation", "Fear", "Joy", "Trust")

QUOTE_WORDS_SOFT = (5, 10)
QUOTE_WORDS_HARD = (2, 25)

TERMINAL_PUNCTUATION = ".!?…"
_CLOSERS = "\"'”’)]»"

REMIX = "remix"


class QuoteLengthWarning(UserWarning):
    """A quote falls outside the 5-10 word guidance but inside the hard bound."""


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def normalize_words(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip punctuation from both ends
    of every token. Tokens made only of punctuation are dropped.

    >>> normalize_words("DKNY never sleeps.")
    ['dkny', 'never', 'sleeps']
    """
    words = []
    for token in text.lower().split():
        token = _strip_punct(token)
        if token:
            words.append(token)
    return words


def normalize_space(text: str) -> str:
    return " ".join(text.split())


def ends_with_terminal_punctuation(text: str) -> bool:
    stripped = text.rstrip().rstrip(_CLOSERS)
    return bool(stripped) and stripped[-1] in TERMINAL_PUNCTUATION


@dataclass(frozen=True)
class Brand:
    name: str
    domain: str
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValueError("brand name must be non-empty")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")
        object.__setattr__(self, "keywords", tuple(self.keywords))

    def mentioned_in(self, text: str) -> bool:
        """True when the brand name or one of its keywords occurs in ``text``
        as a whole-word sequence (possessive ``'s`` tolerated)."""
        words = normalize_words(text)
        words = words + [_drop_possessive(w) for w in words]
        for phrase in (self.name, *self.keywords):
            target = normalize_words(phrase)
            if target and _contains_run(words, target):
                return True
        return False


def _drop_possessive(word: str) -> str:
    for suffix in ("'s", "’s"):
        if word.endswith(suffix):
            return word[: -len(suffix)]
    return word


def _contains_run(words: Sequence[str], target: Sequence[str]) -> bool:
    k = len(target)
    return any(list(words[i : i + k]) == list(target) for i in range(len(words) - k + 1))


@dataclass(frozen=True)
class Persona:
    label: str
    guideline: str

    def __post_init__(self):
        if self.label not in PERSONAS:
            raise ValueError(f"unknown persona {self.label!r}; expected one of {PERSONAS}")
        if not self.guideline or not self.guideline.strip():
            raise ValueError(f"persona {self.label} has no guideline")


@dataclass(frozen=True)
class Quote:
    text: str
    author: str
    rationale: str = ""
    word_count: int = field(init=False)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("quote text must be non-empty")
        if not self.author.strip():
            raise ValueError("quote author must be non-empty")
        n = len(normalize_words(self.text))
        object.__setattr__(self, "word_count", n)
        lo, hi = QUOTE_WORDS_HARD
        if not lo <= n <= hi:
            raise ValueError(f"quote has {n} words, outside the accepted range [{lo}, {hi}]")
        lo, hi = QUOTE_WORDS_SOFT
        if not lo <= n <= hi:
            warnings.warn(f"quote {self.text!r} has {n} words (guidance is {lo}-{hi})",
                          QuoteLengthWarning, stacklevel=3)


@dataclass(frozen=True)
class Segment:
    text: str
    editable: bool


@dataclass(frozen=True)
class QuoteSegmentation:
    segments: tuple[Segment, ...]
    source: Quote

    def __post_init__(self):
        object.__setattr__(
            self, "segments",
            tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments),
        )

    @property
    def joined(self) -> str:
        return " ".join(s.text for s in self.segments)

    def editable_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.segments) if s.editable]


RECONSTRUCTION_MISMATCH = "reconstruction_mismatch"
NO_EDITABLE_SEGMENT = "no_editable_segment"
NO_FIXED_SEGMENT = "no_fixed_segment"


def validate_segmentation(seg: QuoteSegmentation) -> list[str]:
    """Return the violated segmentation invariants; an empty list means ok."""
    problems = []
    if normalize_space(seg.joined) != normalize_space(seg.source.text):
        problems.append(RECONSTRUCTION_MISMATCH)
    if not any(s.editable for s in seg.segments):
        problems.append(NO_EDITABLE_SEGMENT)
    if all(s.editable for s in seg.segments):
        problems.append(NO_FIXED_SEGMENT)
    return problems


@dataclass(frozen=True)
class Replacement:
    segment_index: Optional[int]
    original: str
    replacement: str
    reason: str = ""
    set_index: int = 1


@dataclass(frozen=True)
class RemixTrace:
    matched_quotes: tuple[Quote, ...]
    starred_quote: Quote
    segmentation: QuoteSegmentation
    replacements: tuple[Replacement, ...]
    final_slogan: str
    raw_transcript: str
    nonce: int = 0
    refined: bool = False
    pre_refinement: str = ""

    def __post_init__(self):
        object.__setattr__(self, "matched_quotes", tuple(self.matched_quotes))
        object.__setattr__(self, "replacements", tuple(self.replacements))
        if self.starred_quote not in self.matched_quotes:
            raise ValueError("starred quote must be one of the matched quotes")
        editable = set(self.segmentation.editable_indices())
        for r in self.replacements:
            if r.segment_index not in editable:
                raise ValueError(f"replacement {r.original!r} does not target an editable segment")
        if "END_OF_REMIX" not in self.raw_transcript:
            raise ValueError("raw transcript lacks the END_OF_REMIX sentinel")


@dataclass(frozen=True)
class SloganCandidate:
    text: str
    brand: Brand
    persona: Persona
    source_method: str = REMIX
    trace: Optional[RemixTrace] = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("slogan text must be non-empty")
        if self.source_method == REMIX:
            if not ends_with_terminal_punctuation(self.text):
                raise ValueError(f"remix slogan {self.text!r} must end with punctuation")
            if not self.brand.mentioned_in(self.text):
                raise ValueError(f"remix slogan {self.text!r} does not mention {self.brand.name}")


@dataclass(frozen=True)
class SloganSet:
    brand: Brand
    persona: Persona
    slogans: tuple[SloganCandidate, ...]

    def __post_init__(self):
        object.__setattr__(self, "slogans", tuple(self.slogans))
        for s in self.slogans:
            if s.brand != self.brand or s.persona != self.persona:
                raise ValueError("all slogans in a set must share the same brand and persona")

    @property
    def cell(self) -> tuple[Brand, Persona]:
        return (self.brand, self.persona)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.slogans]

    def __len__(self):
        return len(self.slogans)
