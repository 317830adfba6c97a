"""Slow, independent reference computations used by ``verify`` and the tests.

Nothing here calls the fast paths it is meant to check: e-BH is checked by
subset enumeration, NB likelihoods go through ``scipy.special.gammaln``, MLEs
through grid search, and expectations through quadrature or exact sums.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special


def ebh_by_enumeration(evalues: Sequence[float], alpha: float) -> frozenset[int]:
    """Largest subset R with ``|R| * min(E_R) / G >= 1/alpha`` over all 2^G subsets."""
    G = len(evalues)
    best: frozenset[int] = frozenset()
    for size in range(G, 0, -1):
        for R in itertools.combinations(range(G), size):
            if size * min(evalues[g] for g in R) / G >= 1.0 / alpha:
                return frozenset(R)
    return best


def _nb_logpmf_array(y, m, a):
    # Written in (r, m) rather than scipy.stats.nbinom's (r, p): with p = r/(r+m)
    # and m near the 1e-8 clamp, 1 - p keeps only ~8 digits, which is too coarse
    # for a 1e-9 comparison.
    r = 1.0 / a
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    log_rm = np.log(r + m)
    return (special.gammaln(y + r) - special.gammaln(r) - special.gammaln(y + 1.0)
            + r * (np.log(r) - log_rm) + y * (np.log(m) - log_rm))


def nb_logpmf_scipy(y: int, m: float, a: float) -> float:
    return float(_nb_logpmf_array(y, m, a))


def _loglik(ys: np.ndarray, means: np.ndarray, a: float) -> float:
    return float(_nb_logpmf_array(ys, means, a).sum())


def _zoom_1d(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-7) -> float:
    while hi - lo > tol:
        grid = np.linspace(lo, hi, 41)
        i = int(np.argmax([f(v) for v in grid]))
        step = grid[1] - grid[0]
        lo, hi = grid[i] - step, grid[i] + step
    return 0.5 * (lo + hi)


def nb_null_mle_grid(ys: Sequence[int], a: float) -> float:
    """Grid-search maximizer of the beta=0 likelihood over the log-mean gamma."""
    y = np.asarray(ys)
    return _zoom_1d(lambda g: _loglik(y, np.full(len(y), math.exp(g)), a), -10.0, 10.0)


def nb_full_mle_grid(xs: Sequence[int], ys: Sequence[int], a: float, tol: float = 1e-7) -> tuple[float, float]:
    """2-D zooming grid search for ``(beta, gamma)``; the log-likelihood is concave in both."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys)
    blo, bhi, glo, ghi = -10.0, 10.0, -10.0, 10.0
    k = 21
    while max(bhi - blo, ghi - glo) > tol:
        bs = np.linspace(blo, bhi, k)
        gs = np.linspace(glo, ghi, k)
        B, Gm = np.meshgrid(bs, gs, indexing="ij")
        eta = B[..., None] * x + Gm[..., None]
        ll = _nb_logpmf_array(y, np.exp(eta), a).sum(axis=-1)
        i, j = np.unravel_index(int(np.argmax(ll)), ll.shape)
        db, dg = bs[1] - bs[0], gs[1] - gs[0]
        blo, bhi = bs[i] - db, bs[i] + db
        glo, ghi = gs[j] - dg, gs[j] + dg
    return 0.5 * (blo + bhi), 0.5 * (glo + ghi)


def universal_nb_recompute(xs: Sequence[int], ys: Sequence[int], a: float,
                           eps: float = 1e-8) -> list[float]:
    """log U_n for n = 1..len(ys), rebuilt from scratch at every n (O(n^2))."""
    out = []
    for n in range(1, len(ys) + 1):
        log_num = 0.0
        for i in range(n):
            past_x = np.asarray(xs[:i])
            past_y = np.asarray(ys[:i], dtype=float)
            if i == 0:
                beta, gamma = 0.0, 0.0
            elif (past_x == 0).sum() == 0 or (past_x == 1).sum() == 0:
                beta, gamma = 0.0, math.log(max(past_y.mean(), eps))
            else:
                gamma = math.log(max(past_y[past_x == 0].mean(), eps))
                beta = math.log(max(past_y[past_x == 1].mean(), eps)) - gamma
            log_num += nb_logpmf_scipy(ys[i], math.exp(xs[i] * beta + gamma), a)
        m_null = max(float(np.mean(ys[:n])), eps)
        log_den = _loglik(np.asarray(ys[:n]), np.full(n, m_null), a)
        out.append(log_num - log_den)
    return out


# --- expectations of stepwise factors under their nulls ---------------------


def discrete_expectation(pmf: Callable[[int], float], factor: Callable[[int], float],
                         tail_tol: float = 1e-15, max_y: int = 1_000_000) -> float:
    """``sum_y factor(y) pmf(y)`` over y = 0, 1, ...

    Stops once the null tail is negligible *and* the weighted terms have died
    out (a growing factor can keep the weighted sum going past the null bulk).
    """
    total = 0.0
    mass = 0.0
    quiet = 0
    for y in range(max_y):
        p = pmf(y)
        term = factor(y) * p
        total += term
        mass += p
        quiet = quiet + 1 if (1.0 - mass < tail_tol and term < tail_tol * 1e-3) else 0
        if quiet >= 50:
            break
    return total


def continuous_expectation(logpdf: Callable[[float], float], log_factor: Callable[[float], float]) -> float:
    """``int exp(log_factor(y) + logpdf(y)) dy`` over the real line."""
    val, _ = integrate.quad(lambda y: math.exp(log_factor(y) + logpdf(y)), -np.inf, np.inf,
                            epsabs=1e-13, epsrel=1e-12, limit=500)
    return val
