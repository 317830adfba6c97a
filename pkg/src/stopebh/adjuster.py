"""Adjusters and e-lifting.

An adjuster is a non-decreasing ``A: [1, inf) -> [0, inf)`` with
``int_1^inf A(x) / x^2 dx <= 1``. Applied to the running maximum of an
e-process it gives a process that stays valid on any finer filtration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import integrate

from .eprocess import EProcessState


class AdjusterSpecError(ValueError):
    pass


@dataclass(frozen=True)
class AdjusterSpec:
    """``kind`` is "power" (needs ``k`` in (0,1)), "sqrt_minus_one" or "custom" (needs ``knots``).

    Custom tables are linearly interpolated between knots and linearly
    extrapolated past the last knot with the last segment's slope.
    """

    kind: str
    k: float | None = None
    knots: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.kind == "power":
            if self.k is None or not 0.0 < self.k < 1.0:
                raise AdjusterSpecError(f"power adjuster needs k in (0, 1), got {self.k!r}")
        elif self.kind == "sqrt_minus_one":
            pass
        elif self.kind == "custom":
            _check_knots(self.knots)
        else:
            raise AdjusterSpecError(f"unknown adjuster kind {self.kind!r}")


def _check_knots(knots) -> None:
    if len(knots) < 2:
        raise AdjusterSpecError("custom adjuster needs at least two knots")
    xs = [float(x) for x, _ in knots]
    ys = [float(y) for _, y in knots]
    if xs[0] != 1.0:
        raise AdjusterSpecError(f"custom adjuster table must start at x=1, got {xs[0]!r}")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise AdjusterSpecError("custom adjuster x knots must be strictly increasing")
    if any(b < a for a, b in zip(ys, ys[1:])):
        raise AdjusterSpecError("custom adjuster values must be non-decreasing")
    if ys[0] < 0.0:
        raise AdjusterSpecError("custom adjuster values must be nonnegative")


def custom_adjuster(knots: Sequence[tuple[float, float]]) -> AdjusterSpec:
    return AdjusterSpec("custom", knots=tuple((float(x), float(y)) for x, y in knots))


def load_adjuster_table(path: str | Path) -> AdjusterSpec:
    """Read a two-column whitespace/comma separated ``x A(x)`` table."""
    text = Path(path).read_text()
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.replace(",", " ").split()
        if len(cols) != 2:
            raise AdjusterSpecError(f"{path}:{lineno}: expected two columns, got {len(cols)}")
        try:
            rows.append((float(cols[0]), float(cols[1])))
        except ValueError as exc:
            raise AdjusterSpecError(f"{path}:{lineno}: {exc}") from None
    return custom_adjuster(rows)


def adjuster_value(spec: AdjusterSpec, x: float) -> float:
    if x < 1.0:
        raise ValueError(f"adjusters are defined on [1, inf), got x={x!r}")
    if spec.kind == "power":
        return spec.k * x ** (1.0 - spec.k)
    if spec.kind == "sqrt_minus_one":
        return math.sqrt(x) - 1.0
    xs = [p[0] for p in spec.knots]
    ys = [p[1] for p in spec.knots]
    if x >= xs[-1]:
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return ys[-1] + slope * (x - xs[-1])
    return float(np.interp(x, xs, ys))


@dataclass(frozen=True)
class IntegralCheck:
    integral_estimate: float
    bound: float
    divergent: bool
    tol: float

    @property
    def passed(self) -> bool:
        return not self.divergent and self.integral_estimate <= self.bound * (1.0 + self.tol)


def _dyadic_integral(integrand, breakpoints: Sequence[float], cap: float, tol: float,
                     max_pieces: int = 400) -> tuple[float, bool]:
    """``int_1^inf integrand`` summed over the pieces [2^j, 2^(j+1)].

    The tail beyond the last piece is extrapolated geometrically from the
    ratio of consecutive pieces. Divergence is declared once the running sum
    passes ``cap`` or the pieces stop shrinking.
    """
    total = 0.0
    prev = None
    last_knot = max(breakpoints, default=1.0)
    for j in range(max_pieces):
        lo, hi = 2.0 ** j, 2.0 ** (j + 1)
        pts = [b for b in breakpoints if lo < b < hi]
        piece, _ = integrate.quad(integrand, lo, hi, points=pts or None,
                                  epsabs=1e-15, epsrel=1e-13, limit=200)
        total += piece
        if total > cap:
            return total, True
        if piece == 0.0 and hi >= last_knot:
            # monotone and zero past the last knot: zero from here on
            return total, False
        if prev is not None and prev > 0.0:
            ratio = piece / prev
            if ratio < 1.0 and piece * ratio / (1.0 - ratio) < tol * 1e-3:
                return total + piece * ratio / (1.0 - ratio), False
        prev = piece
    return total, True


def _breakpoints(spec: AdjusterSpec) -> list[float]:
    return [p[0] for p in spec.knots] if spec.kind == "custom" else []


def adjuster_validity(spec: AdjusterSpec, tol: float = 1e-6) -> IntegralCheck:
    """Check ``int_1^inf A(x)/x^2 dx <= 1`` by piecewise adaptive quadrature."""
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    est, div = _dyadic_integral(lambda x: adjuster_value(spec, x) / (x * x),
                                _breakpoints(spec), cap=10.0, tol=tol)
    return IntegralCheck(integral_estimate=est, bound=1.0, divergent=div, tol=tol)


@dataclass(frozen=True)
class CompoundAdjusterSpec:
    """G monotone components with optional nonnegative weights (component g is ``w_g * A_g``)."""

    components: tuple[AdjusterSpec, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.components:
            raise AdjusterSpecError("compound adjuster needs at least one component")
        if self.weights is not None:
            if len(self.weights) != len(self.components) or any(w < 0 for w in self.weights):
                raise AdjusterSpecError("weights must be nonnegative, one per component")

    @property
    def G(self) -> int:
        return len(self.components)

    def component_value(self, g: int, x: float) -> float:
        w = 1.0 if self.weights is None else self.weights[g]
        return w * adjuster_value(self.components[g], x)


def compound_adjuster_validity(spec: CompoundAdjusterSpec, tol: float = 1e-6) -> IntegralCheck:
    """Check ``int_1^inf sum_g A_g(x)/x^2 dx <= G``."""
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    G = spec.G
    bps = sorted({b for c in spec.components for b in _breakpoints(c)})

    def integrand(x):
        return sum(spec.component_value(g, x) for g in range(G)) / (x * x)

    est, div = _dyadic_integral(integrand, bps, cap=10.0 * G, tol=tol * G)
    return IntegralCheck(integral_estimate=est, bound=float(G), divergent=div, tol=tol)


def elift(state: EProcessState, spec: AdjusterSpec) -> float:
    """``A(max_{i<=n} M_i)``, and 1 at n = 0."""
    if state.n == 0:
        return 1.0
    return adjuster_value(spec, max(1.0, math.exp(state.log_running_max)))


class LiftedProcess:
    """Wraps any process handle and reports its e-lifted value.

    ``check`` runs the integral test once at construction; pass False when the
    spec has already been validated (e.g. inside Monte Carlo loops).
    """

    def __init__(self, inner: Any, spec: AdjusterSpec, check: bool = True):
        if check and not adjuster_validity(spec).passed:
            raise AdjusterSpecError(f"{spec} is not a valid adjuster")
        self.inner = inner
        self.spec = spec
        self.family = f"lifted[{inner.family}]"

    def update(self, x: Any, y: Any) -> None:
        self.inner.update(x, y)

    @property
    def state(self) -> EProcessState:
        return self.inner.state

    @property
    def value(self) -> float:
        return elift(self.inner.state, self.spec)

    @property
    def n(self) -> int:
        return self.inner.n
