"""Stepwise e-values and the e-processes built from them.

Each family supplies a factor ``E_n(x, y) >= 0`` whose conditional mean under
the null is at most one; multiplying factors gives a test supermartingale and
an infimum over a null grid gives an e-process. Values are kept in log space.

Process handles (``FactorProcess``, ``UniversalNBProcess``, ``InfimumProcess``)
share a small duck-typed surface used by the session: ``update(x, y)``,
``value``, ``state`` and ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence, Union

EPS_MEAN = 1e-8

# Schedules are constants or predictable callbacks ``f(n, state_before_step)``.
Schedule = Union[float, Callable[[int, "EProcessState"], float]]


@dataclass
class EProcessState:
    family: str
    n: int = 0
    log_value: float = 0.0
    log_running_max: float = 0.0
    suff_stats: dict[str, float] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return _exp(self.log_value)

    @property
    def running_max(self) -> float:
        return _exp(self.log_running_max)


def _add_log(log_value: float, log_factor: float) -> float:
    # zero absorbs, including against an infinite factor
    if log_value == -math.inf or log_factor == -math.inf:
        return -math.inf
    return log_value + log_factor


def product_update(state: EProcessState, factor: float) -> EProcessState:
    """Multiply the process by one nonnegative factor (log domain)."""
    factor = float(factor)
    if math.isnan(factor) or factor < 0.0:
        raise ValueError(f"factor must be nonnegative, got {factor!r}")
    log_factor = math.log(factor) if factor > 0.0 else -math.inf
    return log_product_update(state, log_factor)


def log_product_update(state: EProcessState, log_factor: float) -> EProcessState:
    if math.isnan(log_factor):
        raise ValueError("log factor is NaN")
    log_value = _add_log(state.log_value, log_factor)
    return replace(
        state,
        n=state.n + 1,
        log_value=log_value,
        log_running_max=max(state.log_running_max, log_value),
        suff_stats=dict(state.suff_stats),
    )


def infimum_process(states: Sequence[EProcessState]) -> float:
    """Minimum current value over the states of a null parameter grid."""
    if not states:
        raise ValueError("null parameter grid is empty")
    return _exp(min(s.log_value for s in states))


# --- stepwise factors -------------------------------------------------------


def betting_factor(y: float, null_theta: float = 0.5) -> float:
    """``1 + (y - m0)/2`` for a +/-1 coin with null P(y=1)=theta, m0 = 2*theta - 1.

    At theta = 1/2 this is the classic ``1 + y/2``.
    """
    if y not in (-1, 1):
        raise ValueError(f"coin response must be -1 or +1, got {y!r}")
    if not 0.0 <= null_theta <= 1.0:
        raise ValueError(f"null_theta must lie in [0, 1], got {null_theta!r}")
    return 1.0 + (y - (2.0 * null_theta - 1.0)) / 2.0


def _exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def gaussian_log_factor(eta: float, sigma_gg: float, y: float) -> float:
    if not sigma_gg > 0.0:
        raise ValueError(f"variance must be positive, got {sigma_gg!r}")
    return eta * y - 0.5 * eta * eta * sigma_gg


def gaussian_factor(eta: float, sigma_gg: float, y: float) -> float:
    return _exp(gaussian_log_factor(eta, sigma_gg, y))


def sprt_factor(null_density: Callable, alt_density: Callable, x: Any, y: Any) -> float:
    """Likelihood ratio ``q(y|x) / p(y|x)``; +inf when only the null puts zero mass on y."""
    p = float(null_density(y, x))
    q = float(alt_density(y, x))
    if p < 0.0 or q < 0.0:
        raise ValueError("densities must be nonnegative")
    if p == 0.0:
        if q == 0.0:
            raise ValueError(f"both densities vanish at y={y!r}")
        return math.inf
    return q / p


def catoni_phi(x: float) -> float:
    if x >= 0.0:
        return math.log1p(x + 0.5 * x * x)
    return -math.log1p(-x + 0.5 * x * x)


def catoni_log_factor(lam: float, mu_x: float, v_x: float, y: float) -> float:
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if v_x < 0.0:
        raise ValueError(f"variance bound must be nonnegative, got {v_x!r}")
    return catoni_phi(lam * (y - mu_x)) - 0.5 * lam * lam * v_x


def catoni_factor(lam: float, mu_x: float, v_x: float, y: float) -> float:
    return _exp(catoni_log_factor(lam, mu_x, v_x, y))


# --- negative binomial (NB2: variance m + a m^2) ---------------------------


def nb_logpmf(y: int, m: float, a: float) -> float:
    if not (m > 0.0 and a > 0.0):
        raise ValueError(f"NB mean and dispersion must be positive, got m={m!r}, a={a!r}")
    if y < 0 or int(y) != y:
        raise ValueError(f"NB response must be a nonnegative integer, got {y!r}")
    r = 1.0 / a
    return (
        math.lgamma(y + r)
        - math.lgamma(r)
        - math.lgamma(y + 1.0)
        + r * math.log(r / (r + m))
        + y * math.log(m / (r + m))
    )


def _clamped_log_mean(total: float, count: int) -> float:
    return math.log(max(total / count, EPS_MEAN))


def nb_mle_null(history: Sequence[tuple[Any, int]], a: float) -> float:
    """Null (beta = 0) MLE of the log-mean: the log of the clamped sample mean.

    With the dispersion fixed, the NB2 score in the mean vanishes at the
    sample mean, so no iteration is needed.
    """
    if not history:
        raise ValueError("nb_mle_null needs a non-empty history")
    if not a > 0.0:
        raise ValueError("dispersion must be positive")
    ys = [y for _, y in history]
    return _clamped_log_mean(float(sum(ys)), len(ys))


def _full_from_stats(c0: int, s0: float, c1: int, s1: float) -> tuple[float, float]:
    if c0 == 0 or c1 == 0:
        # one group unobserved: beta unidentified, fall back to the pooled mean
        return 0.0, _clamped_log_mean(s0 + s1, c0 + c1)
    gamma = _clamped_log_mean(s0, c0)
    return _clamped_log_mean(s1, c1) - gamma, gamma


def nb_mle_full(history: Sequence[tuple[int, int]], a: float) -> tuple[float, float]:
    """Full-model MLE ``(beta, gamma)`` for a binary covariate: per-group log means."""
    if not history:
        raise ValueError("nb_mle_full needs a non-empty history")
    if not a > 0.0:
        raise ValueError("dispersion must be positive")
    c = [0, 0]
    s = [0.0, 0.0]
    for x, y in history:
        if x not in (0, 1):
            raise ValueError(f"covariate must be 0 or 1, got {x!r}")
        c[x] += 1
        s[x] += y
    return _full_from_stats(c[0], s[0], c[1], s[1])


def universal_nb_init(a: float) -> EProcessState:
    if not a > 0.0:
        raise ValueError("dispersion must be positive")
    return EProcessState(
        family="universal_nb",
        suff_stats={
            "a": float(a),
            "c0": 0.0,
            "c1": 0.0,
            "s0": 0.0,
            "s1": 0.0,
            "log_num": 0.0,
            "sum_lgamma_yr": 0.0,
            "sum_lgamma_y1": 0.0,
        },
    )


def _null_loglik(st: dict[str, float], gamma: float) -> float:
    a = st["a"]
    r = 1.0 / a
    m = math.exp(gamma)
    n = st["c0"] + st["c1"]
    sy = st["s0"] + st["s1"]
    return (
        st["sum_lgamma_yr"]
        - n * math.lgamma(r)
        - st["sum_lgamma_y1"]
        + n * r * math.log(r / (r + m))
        + sy * math.log(m / (r + m))
    )


def universal_nb_update(state: EProcessState, x: int, y: int, a: float | None = None) -> EProcessState:
    """One step of the universal-inference NB process.

    The numerator accumulates the predictive likelihood under the full-model
    MLE from the data before this step (``(0, 0)`` before any data); the
    denominator is the null likelihood of all data at the refreshed null MLE.
    """
    st = dict(state.suff_stats)
    if a is None:
        a = st["a"]
    elif a != st["a"]:
        raise ValueError("dispersion differs from the one the state was built with")
    if not a > 0.0:
        raise ValueError("dispersion must be positive")
    if x not in (0, 1):
        raise ValueError(f"covariate must be 0 or 1, got {x!r}")
    if y < 0 or int(y) != y:
        raise ValueError(f"NB response must be a nonnegative integer, got {y!r}")

    c0, c1 = int(st["c0"]), int(st["c1"])
    if c0 + c1 == 0:
        beta, gamma = 0.0, 0.0
    else:
        beta, gamma = _full_from_stats(c0, st["s0"], c1, st["s1"])
    st["log_num"] += nb_logpmf(y, math.exp(x * beta + gamma), a)

    r = 1.0 / a
    key = "1" if x == 1 else "0"
    st["c" + key] += 1.0
    st["s" + key] += y
    st["sum_lgamma_yr"] += math.lgamma(y + r)
    st["sum_lgamma_y1"] += math.lgamma(y + 1.0)

    n = state.n + 1
    gamma_null = _clamped_log_mean(st["s0"] + st["s1"], n)
    log_value = st["log_num"] - _null_loglik(st, gamma_null)
    return EProcessState(
        family="universal_nb",
        n=n,
        log_value=log_value,
        log_running_max=max(state.log_running_max, log_value),
        suff_stats=st,
    )


# --- process handles ---------------------------------------------------------


def _rate(schedule: Schedule, n: int, state: EProcessState) -> float:
    value = schedule(n, state) if callable(schedule) else schedule
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"rate schedule produced {value!r} at step {n}")
    return value


class FactorProcess:
    """Product of stepwise factors ``factor(n, state, x, y)`` starting at 1.

    ``factor`` is evaluated with the state *before* the step, so anything it
    reads from the state is predictable. With ``log=True`` it returns the log
    of the factor instead.
    """

    def __init__(self, family: str, factor: Callable[[int, EProcessState, Any, Any], float],
                 log: bool = False):
        self.family = family
        self._factor = factor
        self._log = log
        self.state = EProcessState(family=family)

    def update(self, x: Any, y: Any) -> None:
        f = self._factor(self.state.n + 1, self.state, x, y)
        if self._log:
            self.state = log_product_update(self.state, f)
            return
        if math.isinf(f):
            self.state.suff_stats["infinite_factor"] = 1.0
        self.state = product_update(self.state, f)

    @property
    def value(self) -> float:
        return self.state.value

    @property
    def n(self) -> int:
        return self.state.n


def betting_process(null_theta: float = 0.5) -> FactorProcess:
    return FactorProcess("betting", lambda n, s, x, y: betting_factor(y, null_theta))


def gaussian_process(sigma_gg: float, eta: Schedule = 0.5) -> FactorProcess:
    if not sigma_gg > 0.0:
        raise ValueError(f"variance must be positive, got {sigma_gg!r}")
    return FactorProcess("gaussian", lambda n, s, x, y: gaussian_log_factor(_rate(eta, n, s), sigma_gg, y),
                         log=True)


def sprt_process(null_density: Callable, alt_density: Callable) -> FactorProcess:
    """SPRT process; densities are called as ``density(y, x)``."""
    return FactorProcess("sprt", lambda n, s, x, y: sprt_factor(null_density, alt_density, x, y))


def catoni_process(
    mu: Callable[[Any], float],
    v: Callable[[Any], float],
    lam: Schedule = 0.5,
    side: str = "upper",
) -> FactorProcess:
    """Catoni-style process for ``E[Y|X] <= mu(X)`` (side="upper") or ``>=`` (side="lower")."""
    if side not in ("upper", "lower"):
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    sign = 1.0 if side == "upper" else -1.0

    def factor(n, s, x, y):
        lam_n = _rate(lam, n, s)
        if lam_n <= 0.0:
            raise ValueError("Catoni rate must be positive")
        # the lower-side process is the upper one applied to -y against -mu
        return catoni_log_factor(lam_n, sign * mu(x), v(x), sign * y)

    return FactorProcess("catoni" if side == "upper" else "catoni_lower", factor, log=True)


class UniversalNBProcess:
    def __init__(self, dispersion: float):
        self.family = "universal_nb"
        self.state = universal_nb_init(dispersion)

    def update(self, x: int, y: int) -> None:
        self.state = universal_nb_update(self.state, x, y)

    @property
    def value(self) -> float:
        return self.state.value

    @property
    def n(self) -> int:
        return self.state.n


class InfimumProcess:
    """Pointwise infimum over a finite null grid of member processes."""

    def __init__(self, members: Sequence[Any]):
        if not members:
            raise ValueError("null parameter grid is empty")
        self.members = list(members)
        self.family = "infimum"
        self.state = EProcessState(family="infimum")

    def update(self, x: Any, y: Any) -> None:
        for m in self.members:
            m.update(x, y)
        log_value = min(m.state.log_value for m in self.members)
        self.state = EProcessState(
            family="infimum",
            n=self.state.n + 1,
            log_value=log_value,
            log_running_max=max(self.state.log_running_max, log_value),
        )

    @property
    def value(self) -> float:
        return self.state.value

    @property
    def n(self) -> int:
        return self.state.n


class AverageProcess:
    """Convex combination of processes (e.g. a two-sided Catoni process)."""

    def __init__(self, members: Sequence[Any], weights: Sequence[float] | None = None):
        if not members:
            raise ValueError("need at least one member process")
        w = [1.0 / len(members)] * len(members) if weights is None else [float(v) for v in weights]
        if len(w) != len(members) or any(v < 0 for v in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to one")
        self.members = list(members)
        self.weights = w
        self.family = "average"
        self.state = EProcessState(family="average")

    def update(self, x: Any, y: Any) -> None:
        for m in self.members:
            m.update(x, y)
        total = sum(w * m.value for w, m in zip(self.weights, self.members))
        log_value = math.log(total) if total > 0.0 else -math.inf
        self.state = EProcessState(
            family="average",
            n=self.state.n + 1,
            log_value=log_value,
            log_running_max=max(self.state.log_running_max, log_value),
        )

    @property
    def value(self) -> float:
        return self.state.value

    @property
    def n(self) -> int:
        return self.state.n


def two_sided_catoni_process(mu, v, lam: Schedule = 0.5) -> AverageProcess:
    return AverageProcess([catoni_process(mu, v, lam, "upper"), catoni_process(mu, v, lam, "lower")])


# --- checkpoint records ------------------------------------------------------


def state_to_record(state: EProcessState) -> str:
    """One-line ``key=value`` record: family, n, log_value, log_running_max, then suff_stats."""
    parts = [
        f"family={state.family}",
        f"n={state.n}",
        f"log_value={state.log_value!r}",
        f"log_running_max={state.log_running_max!r}",
    ]
    parts += [f"{k}={float(v)!r}" for k, v in state.suff_stats.items()]
    return ";".join(parts)


def state_from_record(record: str) -> EProcessState:
    fields = []
    for chunk in record.strip().split(";"):
        key, sep, val = chunk.partition("=")
        if not sep:
            raise ValueError(f"malformed record field {chunk!r}")
        fields.append((key, val))
    head = [k for k, _ in fields[:4]]
    if head != ["family", "n", "log_value", "log_running_max"]:
        raise ValueError(f"record fields out of order: {head}")
    return EProcessState(
        family=fields[0][1],
        n=int(fields[1][1]),
        log_value=float(fields[2][1]),
        log_running_max=float(fields[3][1]),
        suff_stats={k: float(v) for k, v in fields[4:]},
    )
