import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from hesitator.stats import DegenerateSampleError, average_ranks, success_rate, wilcoxon_signed_rank

from . import oracles


class S:
    def __init__(self, purchased):
        self.purchased = purchased


def test_success_rate():
    assert success_rate([True, False, True, True]) == 0.75
    assert success_rate([S(True), S(False)]) == 0.5
    with pytest.raises(ValueError):
        success_rate([])


def test_average_ranks_ties():
    assert average_ranks([3, 1, 3, 2]) == [3.5, 1.0, 3.5, 2.0]


def pairs(diffs):
    return [(d, 0) for d in diffs]


def test_three_positive_differences():
    r = wilcoxon_signed_rank(pairs([1, 2, 3]))
    assert r.p_value == 0.25 and r.statistic == 6 and r.method == "exact"


def test_symmetric_samples_give_one():
    assert wilcoxon_signed_rank(pairs([1, -1])).p_value == 1.0
    assert wilcoxon_signed_rank(pairs([2, -2, 2, -2])).p_value == 1.0


def test_all_zero_is_degenerate():
    with pytest.raises(DegenerateSampleError):
        wilcoxon_signed_rank([(1, 1), (0, 0)])


def test_zero_differences_dropped():
    r = wilcoxon_signed_rank(pairs([0, 0, 1, 2, 3]))
    assert r.n == 3 and r.p_value == 0.25


def test_every_sign_pattern_up_to_ten_matches_enumeration():
    for n in range(1, 11):
        for signs in itertools.product((1, -1), repeat=n):
            diffs = [s * (k + 1) for k, s in enumerate(signs)]
            assert wilcoxon_signed_rank(pairs(diffs)).p_value == pytest.approx(oracles.wilcoxon_exact_p(diffs), abs=1e-12)


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=10))
def test_tied_magnitudes_match_enumeration(diffs):
    if not any(diffs):
        return
    assert wilcoxon_signed_rank(pairs(diffs)).p_value == pytest.approx(oracles.wilcoxon_exact_p(diffs), abs=1e-12)


@given(st.lists(st.integers(-1, 1), min_size=30, max_size=300))
def test_normal_branch_matches_reference_library(diffs):
    nz = [d for d in diffs if d]
    if len(nz) <= 25 or len(set(nz)) < 2:
        return
    ours = wilcoxon_signed_rank(pairs(diffs))
    ref = sps.wilcoxon(nz, correction=True, method="approx")
    assert ours.method == "normal"
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


@given(st.lists(st.integers(-5, 5).filter(bool), min_size=1, max_size=25))
def test_p_value_in_unit_interval(diffs):
    p = wilcoxon_signed_rank(pairs(diffs)).p_value
    assert 0.0 < p <= 1.0
