"""Scenario generators, exact enumeration and Monte Carlo FDR estimation.

Randomness: numpy's PCG64 bit generator seeded through ``SeedSequence``;
Monte Carlo trial t uses the t-th child of ``SeedSequence(seed).spawn``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from .ebh import fdp
from .eprocess import betting_factor
from .session import Observation, Session, run

GENERATOR_NAME = "numpy.PCG64 via SeedSequence.spawn"


# --- scenario specs ----------------------------------------------------------


def _equicorrelation(G: int, rho: float) -> np.ndarray:
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho!r}")
    C = np.full((G, G), float(rho))
    np.fill_diagonal(C, 1.0)
    if G > 1 and np.linalg.eigvalsh(C).min() < -1e-12:
        raise ValueError(f"rho={rho} gives a non-PSD correlation matrix for G={G}")
    return C


@dataclass(frozen=True)
class CorrelatedCoins:
    theta: tuple[float, ...]
    rho: float = 0.0
    kind: str = field(default="correlated_coins", init=False)

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
        if any(not 0.0 <= t <= 1.0 for t in self.theta):
            raise ValueError("coin probabilities must lie in [0, 1]")
        _equicorrelation(self.G, self.rho)

    @property
    def G(self) -> int:
        return len(self.theta)

    @property
    def is_null(self) -> tuple[bool, ...]:
        return tuple(t == 0.5 for t in self.theta)


@dataclass(frozen=True)
class MVN:
    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]
    kind: str = field(default="mvn", init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "cov", tuple(tuple(float(c) for c in row) for row in self.cov))
        S = np.asarray(self.cov)
        if S.shape != (self.G, self.G):
            raise ValueError(f"covariance must be {self.G}x{self.G}")
        if not np.allclose(S, S.T):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(S).min() < -1e-10:
            raise ValueError("covariance must be positive semidefinite")

    @property
    def G(self) -> int:
        return len(self.mean)

    @property
    def is_null(self) -> tuple[bool, ...]:
        return tuple(m == 0.0 for m in self.mean)


@dataclass(frozen=True)
class NBGLM:
    """NB2 responses with mean ``exp(x*beta_g + gamma_g)``, x ~ Bernoulli(covariate_p)."""

    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    dispersion: tuple[float, ...]
    covariate_p: float = 0.5
    rho: float = 0.0
    kind: str = field(default="nb_glm", init=False)

    def __post_init__(self):
        for name in ("beta", "gamma", "dispersion"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.beta) == len(self.gamma) == len(self.dispersion):
            raise ValueError("beta, gamma and dispersion need one entry per hypothesis")
        if any(a <= 0 for a in self.dispersion):
            raise ValueError("dispersions must be positive")
        if not 0.0 <= self.covariate_p <= 1.0:
            raise ValueError("covariate_p must lie in [0, 1]")
        _equicorrelation(self.G, self.rho)

    @property
    def G(self) -> int:
        return len(self.beta)

    @property
    def is_null(self) -> tuple[bool, ...]:
        return tuple(b == 0.0 for b in self.beta)


@dataclass(frozen=True)
class Foreteller:
    """Two coin streams; the second replays the first shifted ``d`` ticks ahead."""

    d: int = 1
    theta: float = 0.5
    kind: str = field(default="foreteller", init=False)

    def __post_init__(self):
        if self.d not in (0, 1):
            raise ValueError(f"d must be 0 or 1, got {self.d!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    @property
    def G(self) -> int:
        return 2

    @property
    def is_null(self) -> tuple[bool, ...]:
        return (self.theta == 0.5,) * 2


@dataclass(frozen=True)
class ScenarioSpec:
    model: CorrelatedCoins | MVN | NBGLM | Foreteller
    horizon: int
    seed: int

    @property
    def G(self) -> int:
        return self.model.G

    @property
    def is_null(self) -> tuple[bool, ...]:
        return self.model.is_null


# --- generators ----------------------------------------------------------------


def _latent_gaussians(rng: np.random.Generator, n: int, G: int, rho: float) -> np.ndarray:
    if rho >= 0.0:
        # one-factor form: exact comonotonicity at rho = 1
        common = rng.standard_normal((n, 1))
        own = rng.standard_normal((n, G))
        return math.sqrt(rho) * common + math.sqrt(1.0 - rho) * own
    C = _equicorrelation(G, rho)
    return rng.multivariate_normal(np.zeros(G), C, size=n, method="eigh")


def gen_correlated_coins(spec: CorrelatedCoins, n: int, rng: np.random.Generator) -> list[Observation]:
    Z = _latent_gaussians(rng, n, spec.G, spec.rho)
    cut = stats.norm.ppf(1.0 - np.asarray(spec.theta))
    Y = np.where(Z > cut, 1, -1)
    return [Observation(None, tuple(int(v) for v in row)) for row in Y]


def gen_mvn(spec: MVN, n: int, rng: np.random.Generator) -> list[Observation]:
    if n == 0:
        return []
    Y = rng.multivariate_normal(np.asarray(spec.mean), np.asarray(spec.cov), size=n, method="eigh")
    return [Observation(None, tuple(float(v) for v in row)) for row in Y]


def nb_cdf_table(m: float, a: float, upto: float) -> np.ndarray:
    """CDF of NB2(m, a) at 0, 1, ... until it reaches ``upto`` (summing the pmf)."""
    r = 1.0 / a
    p = (r / (r + m)) ** r
    q = m / (r + m)
    cdf = [p]
    y = 0
    while cdf[-1] < upto and y < 10_000_000:
        p *= (y + r) / (y + 1) * q
        y += 1
        cdf.append(cdf[-1] + p)
        if p == 0.0 and cdf[-1] < upto:
            break
    return np.asarray(cdf)


def nb_quantile(u: np.ndarray, m: float, a: float) -> np.ndarray:
    """Smallest y with F(y) >= u."""
    u = np.asarray(u, dtype=float)
    cdf = nb_cdf_table(m, a, float(u.max()) if u.size else 0.0)
    return np.minimum(np.searchsorted(cdf, u, side="left"), len(cdf) - 1)


def gen_nb_glm(spec: NBGLM, n: int, rng: np.random.Generator,
               covariate_policy: Callable[[int, np.random.Generator], int] | None = None) -> list[Observation]:
    """Gaussian-copula NB responses; ``covariate_policy(i, rng)`` overrides Bernoulli covariates."""
    if covariate_policy is None:
        X = (rng.random(n) < spec.covariate_p).astype(int)
    else:
        X = np.array([int(covariate_policy(i, rng)) for i in range(n)], dtype=int)
    U = stats.norm.cdf(_latent_gaussians(rng, n, spec.G, spec.rho))
    Y = np.empty((n, spec.G), dtype=int)
    for g in range(spec.G):
        for xv in (0, 1):
            rows = X == xv
            if rows.any():
                m = math.exp(xv * spec.beta[g] + spec.gamma[g])
                Y[rows, g] = nb_quantile(U[rows, g], m, spec.dispersion[g])
    return [Observation(int(x), tuple(int(v) for v in row)) for x, row in zip(X, Y)]


def gen_foreteller(spec: Foreteller, n: int, rng: np.random.Generator) -> list[Observation]:
    first = np.where(rng.random(n + spec.d) < spec.theta, 1, -1)
    return [Observation(None, (int(first[i]), int(first[i + spec.d]))) for i in range(n)]


def generate(scenario: ScenarioSpec, rng: np.random.Generator | None = None) -> list[Observation]:
    """A full stream of ``scenario.horizon`` ticks (seeded from ``scenario.seed`` when no rng is given)."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
    model = scenario.model
    gen = {
        "correlated_coins": gen_correlated_coins,
        "mvn": gen_mvn,
        "nb_glm": gen_nb_glm,
        "foreteller": gen_foreteller,
    }[model.kind]
    return gen(model, scenario.horizon, rng)


def write_stream(path: str | Path, stream: Sequence[Observation]) -> None:
    """CSV with header ``n, x, y_1..y_G``; an absent covariate is written empty."""
    G = len(stream[0].y) if stream else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x"] + [f"y_{g + 1}" for g in range(G)])
        for i, obs in enumerate(stream, 1):
            w.writerow([i, "" if obs.x is None else obs.x] + list(obs.y))


# --- the counterexample --------------------------------------------------------


@dataclass(frozen=True)
class CounterexampleRow:
    y1: int
    y2: int
    m1: Fraction
    m2: Fraction
    tau: int
    m_tau: Fraction


@dataclass(frozen=True)
class CounterexampleTable:
    rows: tuple[CounterexampleRow, ...]
    expectation: Fraction


def enumerate_counterexample() -> CounterexampleTable:
    """Exact law of the first betting process stopped at ``1 + 1{Y_2 = +1}`` (fair coin)."""
    half = Fraction(1, 2)
    rows = []
    expectation = Fraction(0)
    for y1, y2 in itertools.product((1, -1), repeat=2):
        # the factors 1.5 and 0.5 are exact binary fractions
        m1 = Fraction(betting_factor(y1))
        m2 = m1 * Fraction(betting_factor(y2))
        tau = 1 + (y2 == 1)
        m_tau = m2 if tau == 2 else m1
        rows.append(CounterexampleRow(y1, y2, m1, m2, tau, m_tau))
        expectation += half * half * m_tau
    return CounterexampleTable(tuple(rows), expectation)


@dataclass
class PathRecord:
    path: tuple[int, ...]
    weight: float
    tau: int
    evalues: tuple[float, ...]
    rejections: frozenset[int]
    trajectory: list = field(repr=False)


@dataclass
class ExactSummary:
    """Exact expectations over every coin path of a foreteller scenario."""

    mean_fdr: float
    mean_evalues: tuple[float, ...]
    rejection_freq: tuple[float, ...]
    mean_tau: float
    paths: int
    records: list[PathRecord] = field(default_factory=list, repr=False)


def enumerate_foreteller(spec: Foreteller, horizon: int, session_factory: Callable[[], Sequence[Any]],
                         rule, alpha: float, keep_records: bool = False) -> ExactSummary:
    """Run the session on all ``2^(horizon+d)`` coin paths, weighting by their probability."""
    k = horizon + spec.d
    if k > 20:
        raise ValueError("exact enumeration is limited to horizon + d <= 20")
    G = 2
    e_sum = [0.0] * G
    freq = [0.0] * G
    fdr = 0.0
    tau = 0.0
    records = []
    for path in itertools.product((1, -1), repeat=k):
        ups = sum(1 for v in path if v == 1)
        w = spec.theta ** ups * (1.0 - spec.theta) ** (k - ups)
        if w == 0.0:
            continue
        stream = [Observation(None, (path[i], path[i + spec.d])) for i in range(horizon)]
        res = run(Session(session_factory(), alpha), stream, rule)
        for g in range(G):
            e_sum[g] += w * res.evalues[g]
            freq[g] += w * (g in res.rejections)
        fdr += w * fdp(res.rejections, spec.is_null)
        tau += w * res.tau
        if keep_records:
            records.append(PathRecord(path, w, res.tau, res.evalues, res.rejections, res.trajectory))
    return ExactSummary(fdr, tuple(e_sum), tuple(freq), tau, 2 ** k, records)


# --- asynchrony ----------------------------------------------------------------


def reindex(schedule: Sequence[Sequence[int]], local_values: Sequence[Sequence[float]]) -> list[list[float]]:
    """Align asynchronous streams on a common tick.

    ``local_values[g][c - 1]`` is stream g's process after c local observations;
    ``schedule[g][k]`` is how many observations stream g contributes to tick k+1.
    Returns rows ``[M~_k^1, ..., M~_k^G]`` with ``M~_k^g`` the value at the
    cumulative count.
    """
    if len(schedule) != len(local_values):
        raise ValueError("need one schedule per stream")
    if len({len(s) for s in schedule}) > 1:
        raise ValueError("every stream needs the same number of synchronized ticks")
    columns = []
    for g, (blocks, values) in enumerate(zip(schedule, local_values)):
        col = []
        count = 0
        for b in blocks:
            if int(b) != b or b < 1:
                raise ValueError(f"block sizes must be positive integers, got {b!r}")
            count += int(b)
            if count > len(values):
                raise ValueError(f"stream {g} schedule needs {count} values, only {len(values)} available")
            col.append(values[count - 1])
        columns.append(col)
    return [list(row) for row in zip(*columns)]


# --- Monte Carlo ---------------------------------------------------------------


@dataclass
class TrialRecord:
    trial: int
    tau: int
    exhausted: bool
    fdp: float
    rejections: frozenset[int]
    evalues: tuple[float, ...]


@dataclass
class MonteCarloSummary:
    trials: int
    mean_fdr: float
    std_error: float
    rejection_freq: tuple[float, ...]
    null_mean_evalues: dict[int, float]
    null_evalue_se: dict[int, float]
    mean_tau: float
    records: list[TrialRecord] = field(default_factory=list, repr=False)
    first_trajectory: list = field(default_factory=list, repr=False)

    def fdr_bound_holds(self, alpha: float) -> bool:
        return self.mean_fdr <= alpha + 3.0 * self.std_error

    def null_evalue_bound_holds(self) -> bool:
        return all(m <= 1.0 + 3.0 * self.null_evalue_se[g] for g, m in self.null_mean_evalues.items())


def mc_fdr(scenario: ScenarioSpec, session_factory: Callable[[], Sequence[Any]], rule,
           trials: int, alpha: float, min_trials: int = 100) -> MonteCarloSummary:
    """Estimate the stopped FDR of e-BH by independent seeded replicates.

    ``session_factory()`` must return fresh process handles, one per hypothesis.
    """
    if trials < min_trials:
        raise ValueError(f"mc_fdr needs at least {min_trials} trials, got {trials}")
    G = scenario.G
    truth = scenario.is_null
    children = np.random.SeedSequence(scenario.seed).spawn(trials)
    fdps = np.empty(trials)
    evals = np.empty((trials, G))
    rej = np.zeros((trials, G))
    taus = np.empty(trials)
    records = []
    first_traj = []
    for t, child in enumerate(children):
        procs = session_factory()
        if len(procs) != G:
            raise ValueError(f"session factory built {len(procs)} processes for G={G}")
        stream = generate(scenario, np.random.default_rng(child))
        res = run(Session(procs, alpha), stream, rule)
        fdps[t] = fdp(res.rejections, truth)
        evals[t] = res.evalues
        for g in res.rejections:
            rej[t, g] = 1.0
        taus[t] = res.tau
        records.append(TrialRecord(t, res.tau, res.exhausted, float(fdps[t]), res.rejections, res.evalues))
        if t == 0:
            first_traj = res.trajectory
    root_n = math.sqrt(trials)
    nulls = [g for g in range(G) if truth[g]]
    return MonteCarloSummary(
        trials=trials,
        mean_fdr=float(fdps.mean()),
        std_error=float(fdps.std(ddof=1) / root_n),
        rejection_freq=tuple(float(v) for v in rej.mean(axis=0)),
        null_mean_evalues={g: float(evals[:, g].mean()) for g in nulls},
        null_evalue_se={g: float(evals[:, g].std(ddof=1) / root_n) for g in nulls},
        mean_tau=float(taus.mean()),
        records=records,
        first_trajectory=first_traj,
    )
