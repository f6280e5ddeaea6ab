import math
import random

import pytest
from hypothesis import given, settings, strategies as st
from nltk.translate.bleu_score import SmoothingFunction
from nltk.translate.bleu_score import sentence_bleu as nltk_bleu

import oracles
from quoteremix.metrics import (
    aggregate_cells,
    distinct2,
    distinct_n,
    diversity_scores,
    pairwise_bleu,
    self_bleu,
    sentence_bleu,
)
from quoteremix.model import Brand, Persona, SloganCandidate, SloganSet

# exp(mean(log(0.1/4), log(0.1/3), log(0.1/2), log(0.1/1)))
DISJOINT_FLOOR = 0.045180100180492254
# all precisions 1, brevity exp(1 - 7/5)
SHORT_HYP = 0.6703200460356393
# p = 5/6, 3/5, 1/4, 0.1/3
CAT_ON_MAT = 0.25406637407730737


def test_distinct2_examples():
    assert distinct2(["a b c"]) == 1.0
    assert distinct2(["a b c", "a b c"]) == 0.5
    assert distinct_n(["a b a b"], 1) == 0.5


@pytest.mark.parametrize("n", range(2, 11))
def test_identical_sets_closed_forms(n):
    texts = ["The only thing we have to fear."] * n
    assert distinct2(texts) == pytest.approx(1 / n, abs=1e-15)
    assert distinct2(texts) == oracles.distinct2(texts)
    assert self_bleu(texts) == pytest.approx(1.0, abs=1e-9)
    assert pairwise_bleu(texts) == pytest.approx(1.0, abs=1e-9)


def test_distinct_rejects_degenerate_input():
    with pytest.raises(ValueError):
        distinct2([])
    with pytest.raises(ValueError):
        distinct2(["Hello.", "two words"])


def test_sentence_bleu_goldens():
    assert sentence_bleu(list("abcd"), [list("abcd")]) == 1.0
    assert sentence_bleu(list("abcd"), [list("efgh")]) == pytest.approx(DISJOINT_FLOOR, abs=1e-15)
    assert DISJOINT_FLOOR < 0.05
    assert sentence_bleu(list("abcde"), [list("abcdefg")]) == pytest.approx(SHORT_HYP, abs=1e-15)
    hyp, ref = "the cat sat on the mat".split(), "the cat is on the mat".split()
    assert sentence_bleu(hyp, [ref]) == pytest.approx(CAT_ON_MAT, abs=1e-15)


def test_brevity_uses_closest_reference():
    hyp = list("abcde")
    # lengths 4 and 6 are equally close; the shorter wins, so no penalty
    assert sentence_bleu(hyp, [list("abcdex"), list("abcd")]) == 1.0
    assert sentence_bleu(hyp, [list("abcdefg"), list("abcdex")]) == pytest.approx(math.exp(1 - 6 / 5))


def test_short_hypotheses_use_available_orders():
    assert sentence_bleu(["dkny"], [["dkny"]]) == 1.0
    assert sentence_bleu(["a", "b"], [["a", "b"]]) == 1.0
    with pytest.raises(ValueError):
        sentence_bleu([], [["a"]])
    with pytest.raises(ValueError):
        sentence_bleu(["a"], [[]])


def test_sentence_bleu_agrees_with_nltk_method1():
    # nltk returns 0 when no unigram matches, so only sentences with overlap
    # and at least four words are comparable
    rng = random.Random(11)
    smooth = SmoothingFunction().method1
    checked = 0
    while checked < 300:
        hyp = [rng.choice(oracles.VOCAB[:6]) for _ in range(rng.randint(4, 9))]
        refs = [[rng.choice(oracles.VOCAB[:6]) for _ in range(rng.randint(4, 9))]
                for _ in range(rng.randint(1, 3))]
        if not set(hyp) & {w for r in refs for w in r}:
            continue
        checked += 1
        assert sentence_bleu(hyp, refs) == pytest.approx(nltk_bleu(refs, hyp, smoothing_function=smooth),
                                                         abs=1e-12)


def test_disjoint_sets_floor():
    assert self_bleu(["a b c d", "e f g h"]) == pytest.approx(DISJOINT_FLOOR, abs=1e-15)
    assert pairwise_bleu(["a b c d", "e f g h"]) == pytest.approx(DISJOINT_FLOOR, abs=1e-15)


def test_bleu_metrics_need_two_texts():
    with pytest.raises(ValueError):
        self_bleu(["Stay bold."])
    with pytest.raises(ValueError):
        pairwise_bleu([])


def test_four_slogan_pairwise_matches_explicit_pairs():
    texts = ["Stay bold, stay innovative.", "DKNY never sleeps.",
             "Something Organic is coming!", "Stay hungry, stay foolish."]
    assert pairwise_bleu(texts) == pytest.approx(oracles.pairwise_bleu(texts), abs=1e-12)


def test_random_sets_match_brute_force():
    rng = random.Random(2024)
    for _ in range(200):
        texts = oracles.random_set(rng)
        assert abs(distinct2(texts) - oracles.distinct2(texts)) <= 1e-12
        assert abs(pairwise_bleu(texts) - oracles.pairwise_bleu(texts)) <= 1e-12
        assert abs(self_bleu(texts) - oracles.self_bleu(texts)) <= 1e-12


sets = st.lists(
    st.lists(st.sampled_from(oracles.VOCAB[:5]), min_size=2, max_size=7).map(" ".join),
    min_size=2, max_size=6,
)


@settings(max_examples=150, deadline=None)
@given(sets, st.randoms(use_true_random=False))
def test_permutation_invariance_and_bounds(texts, rnd):
    shuffled = list(texts)
    rnd.shuffle(shuffled)
    for fn in (distinct2, pairwise_bleu, self_bleu):
        v = fn(texts)
        assert 0.0 < v <= 1.0 + 1e-12
        assert fn(shuffled) == pytest.approx(v, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(sets, st.data())
def test_adding_a_duplicate_never_lowers_self_bleu(texts, data):
    dup = data.draw(st.sampled_from(texts))
    assert self_bleu(texts + [dup]) >= self_bleu(texts) - 1e-12


def test_aggregate_cells():
    assert aggregate_cells([0.5]) == (0.5, 0.0)
    assert aggregate_cells([0.0, 1.0]) == (0.5, 0.5)
    with pytest.raises(ValueError):
        aggregate_cells([])
    rng = random.Random(5)
    values = [rng.random() for _ in range(200)]
    mean, std = aggregate_cells(values)
    ref_mean, ref_std = oracles.two_pass(values)
    assert abs(mean - ref_mean) <= 1e-12 and abs(std - ref_std) <= 1e-12


def test_accepts_slogan_sets():
    dkny = Brand("DKNY", "clothing")
    joy = Persona("Joy", "delight")
    texts = ["DKNY never sleeps!", "DKNY never rests."]
    s = SloganSet(dkny, joy, tuple(SloganCandidate(t, dkny, joy, source_method="x") for t in texts))
    scores = diversity_scores(s)
    assert scores.n == 2
    assert scores.distinct2 == distinct2(texts) == 0.75
    assert scores.self_bleu == self_bleu(texts)
    assert math.isclose(scores.pairwise_bleu, pairwise_bleu(texts))
