"""Fixed-time e-value machinery: e-BH, BH, false discovery proportion, compound e-values.

Hypotheses are indexed 0..G-1 throughout. Rejection sets are ``frozenset[int]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

RejectionSet = frozenset


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def as_evalues(values: Iterable[float]) -> list[float]:
    """Validate and copy an e-value vector (nonnegative, no NaN, +inf allowed)."""
    out = [float(v) for v in values]
    if not out:
        raise ValueError("need at least one e-value")
    for v in out:
        if math.isnan(v):
            raise ValueError("e-values must not be NaN")
        if v < 0.0:
            raise ValueError(f"e-values must be nonnegative, got {v!r}")
    return out


def ebh(evalues: Iterable[float], alpha: float) -> frozenset[int]:
    """The e-BH rejection set at level ``alpha``.

    Rejects every hypothesis whose e-value is at least ``G / (alpha * k*)``
    where ``k*`` is the largest ``k`` with at least ``k`` e-values reaching
    ``G / (alpha * k)``. This is the same set as ``{g : E_g >= E_(k*)}`` with
    ``E_(k)`` the k-th largest value, but comparing against thresholds makes
    ties irrelevant and keeps ``compound_from_rejection`` an exact inverse.
    """
    alpha = _check_alpha(alpha)
    e = as_evalues(evalues)
    G = len(e)
    desc = sorted(e, reverse=True)
    for k in range(G, 0, -1):
        if desc[k - 1] >= G / (alpha * k):
            thresh = G / (alpha * k)
            return frozenset(g for g, v in enumerate(e) if v >= thresh)
    return frozenset()


def bh(pvalues: Iterable[float], alpha: float) -> frozenset[int]:
    """Benjamini-Hochberg step-up rejection set. Entries above 1 (or +inf) are allowed."""
    alpha = _check_alpha(alpha)
    p = [float(v) for v in pvalues]
    if not p:
        raise ValueError("need at least one p-value")
    for v in p:
        if math.isnan(v):
            raise ValueError("p-values must not be NaN")
        if v < 0.0:
            raise ValueError(f"p-values must be nonnegative, got {v!r}")
    G = len(p)
    order = sorted(range(G), key=lambda g: p[g])
    for k in range(G, 0, -1):
        if p[order[k - 1]] <= k * alpha / G:
            return frozenset(order[:k])
    return frozenset()


def reciprocal(values: Iterable[float]) -> list[float]:
    """Elementwise 1/x with 1/0 = inf and 1/inf = 0."""
    out = []
    for v in values:
        v = float(v)
        if v == 0.0:
            out.append(math.inf)
        elif math.isinf(v):
            out.append(0.0)
        else:
            out.append(1.0 / v)
    return out


def fdp(rejections: Iterable[int], is_null: Sequence[bool]) -> float:
    """False discovery proportion of a rejection set against ground truth."""
    R = frozenset(rejections)
    G = len(is_null)
    if any(g < 0 or g >= G for g in R):
        raise ValueError(f"rejection set {sorted(R)} does not fit G={G}")
    false = sum(1 for g in R if is_null[g])
    return false / max(1, len(R))


def compound_from_rejection(rejections: Iterable[int], G: int, alpha: float) -> list[float]:
    """Compound e-values ``(G/alpha) * 1{g in R} / max(|R|, 1)`` that e-BH maps back to R."""
    alpha = _check_alpha(alpha)
    R = frozenset(rejections)
    if G < 1 or any(g < 0 or g >= G for g in R):
        raise ValueError(f"rejection set {sorted(R)} does not fit G={G}")
    if not R:
        return [0.0] * G
    value = G / (alpha * len(R))
    return [value if g in R else 0.0 for g in range(G)]


@dataclass(frozen=True)
class CompoundCheck:
    mean_sum: float
    std_error: float
    G: int
    trials: int

    @property
    def passed(self) -> bool:
        return self.mean_sum <= self.G + 3.0 * self.std_error


def compound_validity_mc(
    sampler: Callable[[np.random.Generator], tuple[Sequence[float], Sequence[bool]]],
    trials: int,
    seed: int,
) -> CompoundCheck:
    """Monte Carlo estimate of ``sum_g 1{g null} E[E_g]`` for a vector sampler.

    ``sampler(rng)`` returns one draw of ``(evalues, is_null)``. The compound
    condition holds (up to 3 standard errors) when the estimate is at most G.
    """
    if trials < 100:
        raise ValueError("compound_validity_mc needs at least 100 trials")
    rng = np.random.default_rng(seed)
    sums = np.empty(trials)
    G = None
    for t in range(trials):
        e, nulls = sampler(rng)
        e = as_evalues(e)
        if G is None:
            G = len(e)
        elif len(e) != G or len(nulls) != G:
            raise ValueError("sampler changed the number of hypotheses")
        sums[t] = sum(v for v, z in zip(e, nulls) if z)
    se = float(sums.std(ddof=1) / math.sqrt(trials))
    return CompoundCheck(mean_sum=float(sums.mean()), std_error=se, G=G, trials=trials)
