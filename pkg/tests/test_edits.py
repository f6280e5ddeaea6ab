import random

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from quoteremix.edits import WORD, EditSpan, word_edit_count


def test_city_to_brand_is_one_span():
    r = word_edit_count("New York never sleeps", "DKNY never sleeps")
    assert r.count == 1
    assert r.spans == (EditSpan(("new", "york"), ("dkny",), 0, 0),)
    assert r.matched_remix_positions == frozenset({1, 2})


def test_two_separate_swaps():
    r = word_edit_count("Stay hungry, stay foolish", "Stay bold, stay innovative")
    assert r.count == 2
    assert [(s.original, s.replacement) for s in r.spans] == [
        (("hungry",), ("bold",)), (("foolish",), ("innovative",))]


def test_identity_and_punctuation_only():
    r = word_edit_count("Something wonderful is coming.", "Something wonderful is coming!")
    assert r.count == 0 and r.spans == ()


def test_insertion_and_deletion_spans():
    assert word_edit_count("The only thing we have to fear is fear itself.",
                           "The only thing we have to fear is missing GE.").count == 1
    assert word_edit_count("Home is where the heart is.",
                           "Whirlpool: Home is where the joy is.").count == 2
    assert word_edit_count("a b c", "").count == 1
    assert word_edit_count("", "").count == 0


def test_word_unit():
    assert word_edit_count("New York never sleeps", "DKNY never sleeps", unit=WORD).count == 2
    assert word_edit_count("Stay hungry, stay foolish", "Stay bold, stay innovative", unit=WORD).count == 2
    with pytest.raises(ValueError):
        word_edit_count("a", "b", unit="letter")


def test_prefers_fewest_spans_among_lcs_alignments():
    # matching the first "a" would leave two gaps; the second leaves one
    assert word_edit_count("a x a", "a").count == 1
    assert oracles.min_span_count("a x a", "a") == 1


def test_agrees_with_enumeration_oracle():
    rng = random.Random(99)
    for _ in range(1000):
        a, b = oracles.random_pair(rng)
        assert word_edit_count(a, b).count == oracles.min_span_count(a, b), (a, b)


words = st.lists(st.sampled_from("a b c dkny".split()), max_size=8).map(" ".join)


@settings(max_examples=300, deadline=None)
@given(words, words)
def test_span_count_is_symmetric(a, b):
    assert word_edit_count(a, b).count == word_edit_count(b, a).count


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_spans_rebuild_the_remix(a, b):
    r = word_edit_count(a, b)
    ta, tb = a.split(), b.split()
    rebuilt = list(ta)
    for s in sorted(r.spans, key=lambda s: -s.original_start):
        rebuilt[s.original_start:s.original_start + len(s.original)] = s.replacement
    assert rebuilt == tb
