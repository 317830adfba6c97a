import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopebh.ebh import (
    bh,
    compound_from_rejection,
    compound_validity_mc,
    ebh,
    fdp,
    reciprocal,
)
from stopebh.oracles import ebh_by_enumeration

# e-values including the edge cases 0 and +inf
evalue = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
    st.sampled_from([0.0, 1.0, 2.0, 10.0, math.inf]),
)
evectors = st.lists(evalue, min_size=1, max_size=12)
alphas = st.floats(min_value=1e-3, max_value=0.999)


# --- worked examples ----------------------------------------------------------


def test_ebh_examples():
    assert ebh([40, 10, 5], 0.1) == {0}
    assert ebh([0, 0, 0], 0.3) == frozenset()
    assert ebh([4, 4], 0.5) == {0, 1}


def test_bh_examples():
    assert bh([0.01, 0.5, 0.9], 0.1) == {0}
    assert bh([1, 1], 0.9) == frozenset()
    assert bh(reciprocal([40, 10, 5]), 0.1) == ebh([40, 10, 5], 0.1)


def test_fdp_examples():
    is_null = [True, False]
    assert fdp({0, 1}, is_null) == 0.5
    assert fdp(set(), is_null) == 0.0
    assert fdp({1}, is_null) == 0.0


def test_compound_examples():
    assert compound_from_rejection({0, 2}, 4, 0.25) == [8, 0, 8, 0]
    assert compound_from_rejection(set(), 3, 0.1) == [0, 0, 0]
    assert ebh(compound_from_rejection({0, 2}, 4, 0.25), 0.25) == {0, 2}


def test_reciprocal_conventions():
    assert reciprocal([0.0, math.inf, 4.0]) == [math.inf, 0.0, 0.25]


@pytest.mark.parametrize("bad", [[math.nan], [-1.0], []])
def test_ebh_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        ebh(bad, 0.1)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 2.0])
def test_alpha_range(alpha):
    with pytest.raises(ValueError):
        ebh([1.0], alpha)
    with pytest.raises(ValueError):
        compound_from_rejection({0}, 1, alpha)


def test_fdp_arity_mismatch():
    with pytest.raises(ValueError):
        fdp({3}, [True, True])


def test_compound_validity_mc_examples():
    ones = compound_validity_mc(lambda rng: ([1.0] * 4, [True] * 4), trials=200, seed=0)
    assert ones.mean_sum == 4.0 and ones.passed

    G = 3
    bad = compound_validity_mc(lambda rng: ([2.0 * G, 0.0, 0.0], [True, False, False]), trials=200, seed=0)
    assert bad.mean_sum == 2 * G and not bad.passed

    # compound e-values generated by e-BH itself on all-null uniform-ish e-values
    def sampler(rng):
        e = 1.0 / rng.uniform(size=5)  # 1/U has infinite mean but calibrated tails
        R = bh(1.0 / e, 0.2)
        return compound_from_rejection(R, 5, 0.2), [True] * 5

    assert compound_validity_mc(sampler, trials=2000, seed=1).passed

    with pytest.raises(ValueError):
        compound_validity_mc(lambda rng: ([1.0], [True]), trials=10, seed=0)


# --- properties ------------------------------------------------------------------


@given(evectors, alphas)
def test_duality_with_bh(e, alpha):
    assert ebh(e, alpha) == bh(reciprocal(e), alpha)


@given(evectors, alphas, st.data())
def test_monotone_in_each_entry(e, alpha, data):
    g = data.draw(st.integers(0, len(e) - 1))
    bump = data.draw(st.floats(min_value=0.0, max_value=1e6))
    bigger = list(e)
    bigger[g] = e[g] + bump
    assert ebh(e, alpha) <= ebh(bigger, alpha)


@given(evectors, alphas)
def test_self_consistency(e, alpha):
    R = ebh(e, alpha)
    G = len(e)
    for g in R:
        assert e[g] >= G / (alpha * len(R))
    # no strictly larger set is self-consistent with its own size
    for k in range(len(R) + 1, G + 1):
        assert sum(v >= G / (alpha * k) for v in e) < k


@given(st.lists(evalue, min_size=1, max_size=8), alphas)
def test_matches_enumeration(e, alpha):
    assert ebh(e, alpha) == ebh_by_enumeration(e, alpha)


@given(st.integers(1, 30), alphas, st.data())
def test_compound_round_trip(G, alpha, data):
    R = frozenset(data.draw(st.sets(st.integers(0, G - 1))))
    assert ebh(compound_from_rejection(R, G, alpha), alpha) == R


@given(st.lists(st.booleans(), min_size=1, max_size=20), st.data())
def test_fdp_in_unit_interval(is_null, data):
    R = data.draw(st.sets(st.integers(0, len(is_null) - 1)))
    assert 0.0 <= fdp(R, is_null) <= 1.0


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_compound_validity_mc_is_seeded(seed):
    def sampler(rng):
        return list(rng.exponential(size=3)), [True, True, False]

    a = compound_validity_mc(sampler, trials=100, seed=seed)
    b = compound_validity_mc(sampler, trials=100, seed=seed)
    assert a == b
    assert np.isfinite(a.std_error)
