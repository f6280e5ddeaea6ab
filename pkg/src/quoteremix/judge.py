"""LLM-as-a-judge protocols: binary quality verdicts and pairwise hook duels."""

from __future__ import annotations

import math
import re
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from . import prompts
from .config import Config
from .gateway import ChatRequest, Gateway
from .metrics import aggregate_cells
from .model import Brand, Persona, SloganCandidate, SloganSet

FLUENCY = "fluency"
FAITHFULNESS = "faithfulness"
DIMENSIONS = (FLUENCY, FAITHFULNESS)

OURS_FIRST = "ours_first"
OURS_SECOND = "ours_second"

WIN, LOSS, TIE = "win", "loss", "tie"

INDEX_ALIGNED = "index_aligned"
ALL_PAIRS = "all_pairs"

# reported when L = T = 0 and W > 0
HOOK_SCORE_CAP = 1e6

_TEMPLATES = {FLUENCY: prompts.FLUENCY, FAITHFULNESS: prompts.FAITHFULNESS}
_ANSWER = re.compile(r"^\s*answer\s*:\s*(\S+)\s*$", re.IGNORECASE)
_REASON = re.compile(r"^\s*reason\s*:\s*(.*?)\s*$", re.IGNORECASE)


class UnparseableVerdict(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class BinaryVerdict:
    value: int
    reason: str
    raw: str
    dimension: str


@dataclass(frozen=True)
class PairVerdict:
    choice: str
    reason: str
    raw: str
    presentation_order: str


@dataclass(frozen=True)
class PairOutcome:
    """Combined result of judging one pair in both presentation orders."""
    result: str
    first: PairVerdict
    second: PairVerdict


def _parse_answer(raw: str, allowed: Sequence[str]) -> tuple[str, str]:
    answers, reason = [], ""
    for line in raw.splitlines():
        m = _ANSWER.match(line)
        if m:
            answers.append(m.group(1))
            continue
        r = _REASON.match(line)
        if r and not reason:
            reason = r.group(1)
    if len(answers) != 1:
        raise UnparseableVerdict(f"expected one 'Answer:' line, found {len(answers)}", raw)
    value = answers[0].upper()
    if value not in allowed:
        raise UnparseableVerdict(f"answer {answers[0]!r} is not one of {'/'.join(allowed)}", raw)
    return value, reason


def parse_binary(raw: str, dimension: str) -> BinaryVerdict:
    value, reason = _parse_answer(raw, ("0", "1"))
    return BinaryVerdict(int(value), reason, raw, dimension)


def parse_pair(raw: str, order: str) -> PairVerdict:
    value, reason = _parse_answer(raw, ("A", "B", "C"))
    return PairVerdict(value, reason, raw, order)


def binary_prompt(brand: Brand, persona: Persona, slogan: str, dimension: str) -> str:
    if dimension not in _TEMPLATES:
        raise ValueError(f"dimension must be one of {DIMENSIONS}")
    return prompts.render(_TEMPLATES[dimension], {
        "Brand": brand.name, "Persona": persona.label, "Slogan": slogan,
    })


def hook_prompt(brand: Brand, persona: Persona, slogan_a: str, slogan_b: str) -> str:
    return prompts.render(prompts.HOOK, {
        "Brand": brand.name, "Persona": persona.label,
        "Slogan A": slogan_a, "Slogan B": slogan_b,
    })


def _judge_request(text: str, config: Config) -> ChatRequest:
    return ChatRequest(user_text=text, temperature=config.temperature.judging,
                       max_output_tokens=128, model_id=config.models.judge)


def judge_binary(slogan: SloganCandidate, dimension: str, gateway: Gateway,
                 config: Optional[Config] = None) -> BinaryVerdict:
    config = config or Config()
    text = binary_prompt(slogan.brand, slogan.persona, slogan.text, dimension)
    raw = gateway.complete(_judge_request(text, config)).text
    return parse_binary(raw, dimension)


def aggregate_novelty(verdicts: Iterable[BinaryVerdict]) -> tuple[float, float]:
    """Disfluency or Unfaithfulness: 100 minus the percentage judged positive.

    The spread is the population standard deviation of the 0/100 indicators.
    """
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("no verdicts to aggregate")
    dims = {v.dimension for v in verdicts}
    if len(dims) > 1:
        raise ValueError(f"verdicts mix dimensions {sorted(dims)}")
    scaled = [100.0 * v.value for v in verdicts]
    return 100.0 - statistics.fmean(scaled), statistics.pstdev(scaled)


def aggregate_novelty_per_cell(cells: Iterable[Sequence[BinaryVerdict]]) -> tuple[float, float]:
    """Alternative aggregation: one novelty score per cell, then mean/std over cells."""
    return aggregate_cells(aggregate_novelty(c)[0] for c in cells)


def combine_orders(first: PairVerdict, second: PairVerdict) -> str:
    """Win/loss/tie for "ours" given verdicts with ours in slot A, then slot B.

    Only an order-consistent preference counts; anything else is a tie.
    """
    winner_first = {"A": WIN, "B": LOSS}.get(first.choice, TIE)
    winner_second = {"B": WIN, "A": LOSS}.get(second.choice, TIE)
    if winner_first == winner_second:
        return winner_first
    return TIE


def judge_pair(brand: Brand, persona: Persona, ours: SloganCandidate, theirs: SloganCandidate,
               gateway: Gateway, config: Optional[Config] = None) -> PairOutcome:
    config = config or Config()
    raw1 = gateway.complete(_judge_request(hook_prompt(brand, persona, ours.text, theirs.text), config)).text
    first = parse_pair(raw1, OURS_FIRST)
    raw2 = gateway.complete(_judge_request(hook_prompt(brand, persona, theirs.text, ours.text), config)).text
    second = parse_pair(raw2, OURS_SECOND)
    return PairOutcome(combine_orders(first, second), first, second)


def hook_score(wins: int, losses: int, ties: int) -> float:
    """(W + T/2) / (L + T/2); :data:`HOOK_SCORE_CAP` when only wins exist,
    1.0 for an empty tally."""
    num = wins + ties / 2
    den = losses + ties / 2
    if den == 0:
        return 1.0 if num == 0 else HOOK_SCORE_CAP
    return num / den


@dataclass(frozen=True)
class TournamentTally:
    wins: int = 0
    losses: int = 0
    ties: int = 0

    def __post_init__(self):
        if min(self.wins, self.losses, self.ties) < 0:
            raise ValueError("tallies must be non-negative")

    @property
    def pairs(self) -> int:
        return self.wins + self.losses + self.ties

    @property
    def hook_score(self) -> float:
        return hook_score(self.wins, self.losses, self.ties)

    @property
    def degenerate(self) -> bool:
        return self.losses + self.ties == 0

    def __add__(self, other: "TournamentTally") -> "TournamentTally":
        return TournamentTally(self.wins + other.wins, self.losses + other.losses,
                               self.ties + other.ties)

    @classmethod
    def from_results(cls, results: Iterable[str]) -> "TournamentTally":
        results = list(results)
        return cls(results.count(WIN), results.count(LOSS), results.count(TIE))


def tournament_pairs(n_ours: int, n_theirs: int, pairing: str = INDEX_ALIGNED) -> list[tuple[int, int]]:
    if pairing == INDEX_ALIGNED:
        if n_ours != n_theirs:
            raise ValueError(f"index-aligned pairing needs equal sizes, got {n_ours} and {n_theirs}")
        return [(i, i) for i in range(n_ours)]
    if pairing == ALL_PAIRS:
        return [(i, j) for i in range(n_ours) for j in range(n_theirs)]
    raise ValueError(f"unknown pairing {pairing!r}")


def run_tournament(ours: SloganSet, baseline: SloganSet, pairing: str, gateway: Gateway,
                   config: Optional[Config] = None) -> TournamentTally:
    if ours.cell != baseline.cell:
        raise ValueError("tournament sets must belong to the same brand-persona cell")
    results = []
    for i, j in tournament_pairs(len(ours), len(baseline), pairing):
        outcome = judge_pair(ours.brand, ours.persona, ours.slogans[i], baseline.slogans[j],
                             gateway, config)
        results.append(outcome.result)
    return TournamentTally.from_results(results)


def pooled_hook_score(tallies: Iterable[TournamentTally]) -> float:
    """Ratio of sums across cells, not a mean of per-cell ratios."""
    total = sum(tallies, TournamentTally())
    return total.hook_score


def bernoulli_std(p: float) -> float:
    """Population std of a 0/100-scaled indicator with positive rate ``p``."""
    return 100.0 * math.sqrt(p * (1 - p))
