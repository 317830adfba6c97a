import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stopebh.adjuster import AdjusterSpec, LiftedProcess
from stopebh.eprocess import betting_process
from stopebh.session import Custom, FirstOf, FixedHorizon, RejectionCount, peek_rule
from stopebh.simlab import (
    MVN,
    NBGLM,
    CorrelatedCoins,
    Foreteller,
    ScenarioSpec,
    enumerate_counterexample,
    enumerate_foreteller,
    gen_correlated_coins,
    gen_foreteller,
    gen_mvn,
    gen_nb_glm,
    generate,
    mc_fdr,
    nb_quantile,
    reindex,
    write_stream,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def within_3se(sample, target):
    sample = np.asarray(sample, dtype=float)
    se = sample.std(ddof=1) / math.sqrt(len(sample))
    return abs(sample.mean() - target) <= 3 * se


# --- generators ---------------------------------------------------------------------


def test_coins_marginal():
    Y = np.array([o.y for o in gen_correlated_coins(CorrelatedCoins((0.5, 0.5), 0.0), 10_000, rng())])
    for g in range(2):
        assert within_3se(Y[:, g] == 1, 0.5)


def test_coins_comonotone_and_degenerate():
    Y = np.array([o.y for o in gen_correlated_coins(CorrelatedCoins((0.5, 0.5), 1.0), 2000, rng())])
    assert (Y[:, 0] == Y[:, 1]).all()
    Y = np.array([o.y for o in gen_correlated_coins(CorrelatedCoins((1.0, 0.0), 0.3), 500, rng())])
    assert (Y[:, 0] == 1).all() and (Y[:, 1] == -1).all()


def test_coins_parameter_errors():
    with pytest.raises(ValueError):
        CorrelatedCoins((0.5, 0.5), 1.5)
    with pytest.raises(ValueError):
        CorrelatedCoins((0.5, 0.5, 0.5), -0.9)  # equicorrelation below -1/(G-1)
    with pytest.raises(ValueError):
        CorrelatedCoins((1.2,))


def test_mvn_moments_and_correlation():
    Y = np.array([o.y for o in gen_mvn(MVN((0.0, 0.0), ((1.0, 0.0), (0.0, 1.0))), 10_000, rng())])
    for g in range(2):
        assert within_3se(Y[:, g], 0.0)
        assert within_3se(Y[:, g] ** 2, 1.0)
    Y = np.array([o.y for o in gen_mvn(MVN((0.0, 0.0), ((1.0, 0.9), (0.9, 1.0))), 10_000, rng(1))])
    assert within_3se(Y[:, 0] * Y[:, 1], 0.9)
    assert gen_mvn(MVN((0.0,), ((1.0,),)), 0, rng()) == []
    with pytest.raises(ValueError):
        MVN((0.0, 0.0), ((1.0, 2.0), (2.0, 1.0)))


@pytest.mark.parametrize("m,a", [(1.0, 1.0), (3.5, 0.2), (0.3, 2.0), (40.0, 0.5)])
def test_nb_quantile_matches_reference(m, a):
    u = np.linspace(0.001, 0.999, 200)
    r = 1.0 / a
    assert (nb_quantile(u, m, a) == stats.nbinom.ppf(u, r, r / (r + m))).all()


def test_nb_glm_means():
    obs = gen_nb_glm(NBGLM((0.0,), (0.0,), (1.0,)), 10_000, rng())
    assert within_3se([o.y[0] for o in obs], 1.0)
    obs = gen_nb_glm(NBGLM((math.log(2),), (0.5,), (0.5,)), 20_000, rng(2))
    y0 = [o.y[0] for o in obs if o.x == 0]
    y1 = [o.y[0] for o in obs if o.x == 1]
    assert within_3se(y0, math.exp(0.5))
    assert within_3se(y1, 2 * math.exp(0.5))


def test_nb_glm_marginality_in_rho():
    means = []
    for rho in (0.0, 0.8):
        obs = gen_nb_glm(NBGLM((0.5, 0.5), (1.0, 1.0), (0.5, 0.5), rho=rho), 20_000, rng(3))
        means.append(np.array([o.y for o in obs], dtype=float))
    for g in range(2):
        a, b = means[0][:, g], means[1][:, g]
        se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
        assert abs(a.mean() - b.mean()) <= 3 * se


def test_nb_glm_covariate_policy():
    obs = gen_nb_glm(NBGLM((1.0,), (0.0,), (1.0,)), 10, rng(), covariate_policy=lambda i, r: i % 2)
    assert [o.x for o in obs] == [i % 2 for i in range(10)]


def test_coins_marginality_in_rho():
    for rho in (0.0, 0.5, 0.9):
        Y = np.array([o.y for o in gen_correlated_coins(CorrelatedCoins((0.3, 0.7), rho), 10_000, rng(4))])
        assert within_3se(Y[:, 0] == 1, 0.3)
        assert within_3se(Y[:, 1] == 1, 0.7)


def test_foreteller():
    same = gen_foreteller(Foreteller(d=0), 50, rng())
    assert all(o.y[0] == o.y[1] for o in same)
    ahead = gen_foreteller(Foreteller(d=1), 50, rng())
    # tick n's second coordinate is tick n+1's first
    assert all(a.y[1] == b.y[0] for a, b in zip(ahead, ahead[1:]))
    with pytest.raises(ValueError):
        Foreteller(d=2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_seeded_determinism(seed):
    for model in (CorrelatedCoins((0.5, 0.6), 0.4), NBGLM((0.0, 1.0), (1.0, 1.0), (1.0, 1.0), rho=0.3),
                  MVN((0.0, 1.0), ((1.0, 0.5), (0.5, 1.0))), Foreteller()):
        spec = ScenarioSpec(model, 20, seed)
        assert generate(spec) == generate(spec)


def test_write_stream(tmp_path):
    path = tmp_path / "s.csv"
    write_stream(path, gen_nb_glm(NBGLM((0.0, 0.0), (1.0, 1.0), (1.0, 1.0)), 3, rng()))
    lines = path.read_text().splitlines()
    assert lines[0] == "n,x,y_1,y_2" and len(lines) == 4


# --- counterexample ----------------------------------------------------------------------


def test_counterexample_table():
    table = enumerate_counterexample()
    assert table.expectation == Fraction(5, 4)
    got = [(r.m1, r.m2, r.tau, r.m_tau) for r in table.rows]
    assert got == [(1.5, 2.25, 2, 2.25), (1.5, 0.75, 1, 1.5), (0.5, 0.75, 2, 0.75), (0.5, 0.25, 1, 0.5)]


def test_foreteller_enumeration_reproduces_violation():
    ex = enumerate_foreteller(Foreteller(d=1), 2, lambda: [betting_process(), betting_process()], peek_rule(1), 0.5)
    assert ex.mean_evalues[0] == 1.25
    assert ex.paths == 8


@pytest.mark.parametrize("adj", [AdjusterSpec("sqrt_minus_one")] + [AdjusterSpec("power", k=k) for k in (0.25, 0.5, 0.75)])
def test_lifted_foreteller_enumeration_is_valid(adj):
    ex = enumerate_foreteller(Foreteller(d=1), 2, lambda: [LiftedProcess(betting_process(), adj) for _ in range(2)],
                              peek_rule(1), 0.5)
    assert ex.mean_evalues[0] <= 1.0


def test_foreteller_d0_peek_is_a_valid_stop():
    # with d = 0 the peeked response is already observed: the stopped mean is exactly 1
    ex = enumerate_foreteller(Foreteller(d=0), 2, lambda: [betting_process(), betting_process()], peek_rule(1), 0.5)
    assert ex.mean_evalues[0] == pytest.approx(1.0, abs=1e-15)


# --- reindexing -----------------------------------------------------------------------


def test_reindex_examples():
    m1 = [10.0, 20.0, 30.0, 40.0, 50.0]
    m2 = [1.0, 2.0]
    assert reindex([[2, 3], [1, 1]], [m1, m2]) == [[20.0, 1.0], [50.0, 2.0]]
    assert reindex([[1, 1]], [[7.0, 8.0]]) == [[7.0], [8.0]]
    with pytest.raises(ValueError):
        reindex([[3]], [[1.0, 2.0]])


# --- Monte Carlo ----------------------------------------------------------------------


def test_mc_fdr_all_null_coins():
    scen = ScenarioSpec(CorrelatedCoins((0.5, 0.5), 0.9), 50, seed=7)
    rule = FirstOf([FixedHorizon(50), RejectionCount(1)])
    mc = mc_fdr(scen, lambda: [betting_process(), betting_process()], rule, 2000, 0.1)
    assert mc.fdr_bound_holds(0.1)
    assert mc.null_evalue_bound_holds()


def test_mc_fdr_foreteller_raw_and_lifted():
    scen = ScenarioSpec(Foreteller(d=1), 2, seed=3)
    raw = mc_fdr(scen, lambda: [betting_process(), betting_process()], peek_rule(1), 4000, 0.5)
    se = raw.null_evalue_se[0]
    assert abs(raw.null_mean_evalues[0] - 1.25) <= 3 * se
    adj = AdjusterSpec("sqrt_minus_one")
    lifted = mc_fdr(scen, lambda: [LiftedProcess(betting_process(), adj) for _ in range(2)], peek_rule(1), 4000, 0.5)
    assert lifted.null_evalue_bound_holds()


def test_independent_streams_make_local_processes_global():
    # rho = 0: a rule that reads stream 2 cannot bias stream 1
    scen = ScenarioSpec(CorrelatedCoins((0.5, 0.5), 0.0), 10, seed=11)
    rule = Custom(lambda n, e, R, nx, past: n >= 10 or past[-1].y[1] == -1)
    mc = mc_fdr(scen, lambda: [betting_process(), betting_process()], rule, 5000, 0.1)
    assert mc.null_mean_evalues[0] <= 1.0 + 3.0 * mc.null_evalue_se[0]


def test_mc_fdr_errors():
    scen = ScenarioSpec(CorrelatedCoins((0.5, 0.5)), 5, seed=0)
    with pytest.raises(ValueError):
        mc_fdr(scen, lambda: [betting_process()], FixedHorizon(5), 100, 0.1)
    with pytest.raises(ValueError):
        mc_fdr(scen, lambda: [betting_process()] * 2, FixedHorizon(5), 10, 0.1)


def test_mc_fdr_is_seeded():
    scen = ScenarioSpec(CorrelatedCoins((0.5, 0.8), 0.5), 20, seed=5)

    def go():
        return mc_fdr(scen, lambda: [betting_process(), betting_process()], FixedHorizon(20), 100, 0.2)

    a, b = go(), go()
    assert (a.mean_fdr, a.std_error, a.rejection_freq) == (b.mean_fdr, b.std_error, b.rejection_freq)
