"""Self-check suites behind ``stopebh verify``.

Every check pits a fast path against something computed differently: closed
forms, quadrature, exact enumeration or brute force. Suites return a list of
``Check`` rows; the CLI prints them and exits 0 iff all pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import stats

from . import oracles
from .adjuster import AdjusterSpec, LiftedProcess, adjuster_validity, custom_adjuster
from .ebh import bh, compound_from_rejection, ebh, reciprocal
from .eprocess import (
    betting_factor,
    betting_process,
    catoni_log_factor,
    gaussian_log_factor,
    nb_logpmf,
    nb_mle_full,
    nb_mle_null,
    sprt_factor,
    universal_nb_init,
    universal_nb_update,
)
from .session import peek_rule
from .simlab import Foreteller, enumerate_counterexample, enumerate_foreteller

SUITES = ("ebh", "adjusters", "stepwise", "counterexample")

# tolerances used throughout
QUAD_TOL = 1e-6
ADJ_TOL = 1e-6
NB_LOG_TOL = 1e-9
MLE_TOL = 1e-4


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.suite}/{self.name}  {self.detail}".rstrip()


# --- random inputs -------------------------------------------------------------


def random_evalues(rng: np.random.Generator, G: int) -> list[float]:
    """Log-normal e-values salted with ties, zeros, ones and the occasional inf."""
    e = np.exp(rng.normal(0.5, 2.0, size=G))
    out = []
    for v in e:
        u = rng.random()
        if u < 0.05:
            v = 0.0
        elif u < 0.08:
            v = math.inf
        elif u < 0.15:
            v = 1.0
        elif u < 0.3 and out:
            v = out[int(rng.integers(len(out)))]
        out.append(float(v))
    return out


def random_nb_history(rng: np.random.Generator, max_len: int = 50) -> tuple[list[int], list[int], float]:
    n = int(rng.integers(1, max_len + 1))
    a = float(rng.choice([0.1, 0.5, 1.0, 2.0]))
    beta, gamma = rng.normal(0.0, 1.0), rng.normal(1.0, 1.0)
    xs = [int(v) for v in rng.integers(0, 2, size=n)]
    r = 1.0 / a
    ys = [int(stats.nbinom.rvs(r, r / (r + math.exp(beta * x + gamma)), random_state=rng)) for x in xs]
    return xs, ys, a


# --- suites ----------------------------------------------------------------------


def suite_ebh(n: int = 1000, seed: int = 11) -> list[Check]:
    rng = np.random.default_rng(seed)
    dual_bad = mono_bad = enum_bad = trip_bad = 0
    for _ in range(n):
        G = int(rng.integers(1, 30))
        alpha = float(rng.uniform(0.01, 0.5))
        e = random_evalues(rng, G)
        R = ebh(e, alpha)
        dual_bad += R != bh(reciprocal(e), alpha)
        # raise one coordinate: the rejection set may only grow
        g = int(rng.integers(G))
        bumped = list(e)
        bumped[g] = bumped[g] * float(rng.uniform(1.0, 10.0)) + float(rng.uniform(0.0, 5.0))
        mono_bad += not R <= ebh(bumped, alpha)
    for _ in range(n):
        G = int(rng.integers(1, 9))
        alpha = float(rng.uniform(0.01, 0.5))
        e = random_evalues(rng, G)
        enum_bad += ebh(e, alpha) != oracles.ebh_by_enumeration(e, alpha)
    for _ in range(n):
        G = int(rng.integers(1, 40))
        alpha = float(rng.uniform(0.001, 0.999))
        R = frozenset(int(g) for g in np.flatnonzero(rng.random(G) < rng.random()))
        trip_bad += ebh(compound_from_rejection(R, G, alpha), alpha) != R
    return [
        Check("ebh", "duality_with_bh", dual_bad == 0, f"{n - dual_bad}/{n} vectors agree"),
        Check("ebh", "monotone_in_each_coordinate", mono_bad == 0, f"{n - mono_bad}/{n} perturbations"),
        Check("ebh", "matches_subset_enumeration", enum_bad == 0, f"{n - enum_bad}/{n} vectors (G<=8)"),
        Check("ebh", "compound_round_trip", trip_bad == 0, f"{n - trip_bad}/{n} sets"),
    ]


def suite_adjusters(tol: float = ADJ_TOL) -> list[Check]:
    out = []
    specs = [("sqrt_minus_one", AdjusterSpec("sqrt_minus_one"))]
    specs += [(f"power_k={k}", AdjusterSpec("power", k=k)) for k in (0.25, 0.5, 0.75)]
    for name, spec in specs:
        chk = adjuster_validity(spec, tol)
        ok = not chk.divergent and abs(chk.integral_estimate - 1.0) <= tol
        out.append(Check("adjusters", f"integral_{name}", ok, f"integral={chk.integral_estimate:.12f}"))
    ident = adjuster_validity(custom_adjuster([(1.0, 1.0), (2.0, 2.0)]), tol)
    out.append(Check("adjusters", "identity_table_divergent", ident.divergent and not ident.passed,
                     "divergent" if ident.divergent else f"integral={ident.integral_estimate}"))
    # stopped lifted processes in the look-ahead counterexample stay below 1
    spec = Foreteller(d=1)
    for name, adj in specs:
        ex = enumerate_foreteller(spec, 2, lambda: [LiftedProcess(betting_process(), adj, check=False)
                                                    for _ in range(2)], peek_rule(1), 0.5)
        m = ex.mean_evalues[0]
        out.append(Check("adjusters", f"lifted_counterexample_{name}", m <= 1.0 + 1e-12, f"E[A(M*_tau)]={m:.6f}"))
    return out


def stepwise_expectations() -> list[tuple[str, float, str]]:
    """(name, expectation, relation) with relation '=' (must equal 1) or '<=' (at most 1)."""
    rows = []
    for sigma in (0.5, 1.0, 4.0):
        for eta in (0.1, 0.5, 2.0):
            sd = math.sqrt(sigma)
            val = oracles.continuous_expectation(lambda y: stats.norm.logpdf(y, scale=sd),
                                                 lambda y: gaussian_log_factor(eta, sigma, y))
            rows.append((f"gaussian_var={sigma}_eta={eta}", val, "="))
    for p0, p1 in ((0.5, 0.7), (0.3, 0.1), (0.9, 0.95)):
        null = lambda y, x, p=p0: p if y == 1 else 1.0 - p
        alt = lambda y, x, p=p1: p if y == 1 else 1.0 - p
        val = sum(null(y, None) * sprt_factor(null, alt, None, y) for y in (0, 1))
        rows.append((f"sprt_bernoulli_p0={p0}_p1={p1}", val, "="))
    for theta in (0.5, 0.2, 0.75):
        # +-1 coin with P(+1) = theta: mean 2*theta - 1
        val = theta * betting_factor(1, theta) + (1 - theta) * betting_factor(-1, theta)
        rows.append((f"betting_theta={theta}", val, "="))
    for a, m0, m1 in ((1.0, 3.0, 7.0), (0.5, 10.0, 2.0), (2.0, 0.5, 4.0)):
        r = 1.0 / a
        pmf = lambda y, m=m0, r=r: float(stats.nbinom.pmf(y, r, r / (r + m)))
        fac = lambda y, m0=m0, m1=m1, a=a: math.exp(nb_logpmf(y, m1, a) - nb_logpmf(y, m0, a))
        rows.append((f"universal_nb_fixed_plugin_a={a}_m0={m0}_m1={m1}",
                     oracles.discrete_expectation(pmf, fac), "="))
    laws = {
        "normal": (lambda y: stats.norm.logpdf(y), 1.0),
        "student_t3": (lambda y: stats.t.logpdf(y, 3), 3.0),
    }
    for lam in (0.1, 0.5, 1.0):
        for name, (logpdf, v) in laws.items():
            val = oracles.continuous_expectation(logpdf, lambda y, lam=lam, v=v: catoni_log_factor(lam, 0.0, v, y))
            rows.append((f"catoni_{name}_lam={lam}", val, "<="))
        val = 0.5 * (math.exp(catoni_log_factor(lam, 0.0, 1.0, 1.0)) + math.exp(catoni_log_factor(lam, 0.0, 1.0, -1.0)))
        rows.append((f"catoni_rademacher_lam={lam}", val, "<="))
    return rows


def suite_stepwise(n_hist: int = 200, n_mle: int = 40, seed: int = 23, tol: float = QUAD_TOL) -> list[Check]:
    out = []
    for name, val, rel in stepwise_expectations():
        ok = abs(val - 1.0) <= tol if rel == "=" else val <= 1.0 + tol
        out.append(Check("stepwise", f"null_expectation_{name}", ok, f"E={val:.12f} ({rel} 1)"))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_hist):
        xs, ys, a = random_nb_history(rng)
        st = universal_nb_init(a)
        inc = []
        for x, y in zip(xs, ys):
            st = universal_nb_update(st, x, y)
            inc.append(st.log_value)
        ref = oracles.universal_nb_recompute(xs, ys, a)
        worst = max(worst, max(abs(u - v) for u, v in zip(inc, ref)))
    out.append(Check("stepwise", "universal_nb_incremental_vs_recompute", worst <= NB_LOG_TOL,
                     f"max |dlog U| = {worst:.3e} over {n_hist} histories"))

    worst_null = worst_full = 0.0
    done = 0
    while done < n_mle:
        xs, ys, a = random_nb_history(rng)
        x_arr, y_arr = np.asarray(xs), np.asarray(ys)
        # the grid oracle needs finite maximizers: positive sums in each group
        if (x_arr == 0).sum() == 0 or (x_arr == 1).sum() == 0:
            continue
        if y_arr[x_arr == 0].sum() == 0 or y_arr[x_arr == 1].sum() == 0:
            continue
        hist = list(zip(xs, ys))
        worst_null = max(worst_null, abs(nb_mle_null(hist, a) - oracles.nb_null_mle_grid(ys, a)))
        b, g = nb_mle_full(hist, a)
        bg, gg = oracles.nb_full_mle_grid(xs, ys, a)
        worst_full = max(worst_full, abs(b - bg), abs(g - gg))
        done += 1
    out.append(Check("stepwise", "nb_mle_null_vs_grid", worst_null <= MLE_TOL, f"max err {worst_null:.2e}"))
    out.append(Check("stepwise", "nb_mle_full_vs_grid", worst_full <= MLE_TOL, f"max err {worst_full:.2e}"))
    return out


# (M_1, M_2, tau, M_tau) for the paths (+1,+1), (+1,-1), (-1,+1), (-1,-1)
COUNTEREXAMPLE_TABLE = (
    (Fraction(3, 2), Fraction(9, 4), 2, Fraction(9, 4)),
    (Fraction(3, 2), Fraction(3, 4), 1, Fraction(3, 2)),
    (Fraction(1, 2), Fraction(3, 4), 2, Fraction(3, 4)),
    (Fraction(1, 2), Fraction(1, 4), 1, Fraction(1, 2)),
)


def suite_counterexample() -> list[Check]:
    table = enumerate_counterexample()
    out = []
    for row, (m1, m2, tau, m_tau) in zip(table.rows, COUNTEREXAMPLE_TABLE):
        tag = f"y=({row.y1:+d},{row.y2:+d})"
        out.append(Check("counterexample", f"tau_{tag}", row.tau == tau, f"{row.tau} vs {tau}"))
        out.append(Check("counterexample", f"m_tau_{tag}", row.m_tau == m_tau and row.m1 == m1 and row.m2 == m2,
                         f"{row.m_tau} vs {m_tau}"))
    out.append(Check("counterexample", "expectation", table.expectation == Fraction(5, 4),
                     f"{table.expectation} vs 5/4"))
    return out


_SUITE_FUNCS: dict[str, Callable[[], list[Check]]] = {
    "ebh": suite_ebh,
    "adjusters": suite_adjusters,
    "stepwise": suite_stepwise,
    "counterexample": suite_counterexample,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for s in SUITES for c in _SUITE_FUNCS[s]()]
    if name not in _SUITE_FUNCS:
        raise KeyError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
    return _SUITE_FUNCS[name]()
