"""Stopped e-BH: drive G e-processes over a shared stream and stop on global rules.

The session follows the look-ahead filtration: after step n it knows every
response up to n and the covariate of step n+1, and a stopping rule sees
exactly that (through its restricted argument list), never a future response.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence

from .ebh import ebh


@dataclass(frozen=True)
class Observation:
    """One global tick: covariate ``x`` (may be None) and the G responses ``y``."""

    x: Any
    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(self.y))


@dataclass(frozen=True)
class Record:
    n: int
    evalues: tuple[float, ...]
    rejections: frozenset[int]


class Session:
    def __init__(self, processes: Sequence[Any], alpha: float):
        if not processes:
            raise ValueError("a session needs at least one process")
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
        self.processes = list(processes)
        self.alpha = float(alpha)
        self.history: list[Record] = []
        self.observed: list[Observation] = []
        self.next_covariate: Any = None

    @property
    def G(self) -> int:
        return len(self.processes)

    @property
    def n(self) -> int:
        return len(self.history)

    @property
    def evalues(self) -> tuple[float, ...]:
        if not self.history:
            return (1.0,) * self.G
        return self.history[-1].evalues

    @property
    def rejections(self) -> frozenset[int]:
        if not self.history:
            return ebh(self.evalues, self.alpha)
        return self.history[-1].rejections

    def step(self, obs: Observation, next_covariate: Any = None) -> tuple[tuple[float, ...], frozenset[int]]:
        if len(obs.y) != self.G:
            raise ValueError(f"observation has {len(obs.y)} responses, session has G={self.G}")
        for proc, y in zip(self.processes, obs.y):
            proc.update(obs.x, y)
        evalues = tuple(p.value for p in self.processes)
        rejections = ebh(evalues, self.alpha)
        self.history.append(Record(len(self.history) + 1, evalues, rejections))
        self.observed.append(obs)
        self.next_covariate = next_covariate
        return evalues, rejections


# --- stopping rules ----------------------------------------------------------
# Each rule exposes ``fires(n, evalues, rejections, next_covariate, past)`` where
# ``past`` is the tuple of observations up to n. Together these are exactly the
# look-ahead information at n.


@dataclass(frozen=True)
class FixedHorizon:
    N: int

    def fires(self, n, evalues, rejections, next_covariate, past=()) -> bool:
        return n >= self.N


@dataclass(frozen=True)
class Threshold:
    """Stop once hypothesis ``g`` (0-based) has e-value at least ``level``."""

    g: int
    level: float

    def fires(self, n, evalues, rejections, next_covariate, past=()) -> bool:
        return evalues[self.g] >= self.level


@dataclass(frozen=True)
class RejectionCount:
    k: int

    def fires(self, n, evalues, rejections, next_covariate, past=()) -> bool:
        return len(rejections) >= self.k


@dataclass(frozen=True)
class FirstOf:
    rules: tuple

    def __init__(self, rules: Iterable):
        object.__setattr__(self, "rules", tuple(rules))

    def fires(self, n, evalues, rejections, next_covariate, past=()) -> bool:
        return any(r.fires(n, evalues, rejections, next_covariate, past) for r in self.rules)


class RuleError(RuntimeError):
    pass


@dataclass(frozen=True)
class Custom:
    """Wraps ``predicate(n, evalues, rejections, next_covariate, past)``."""

    predicate: Callable[[int, tuple, frozenset, Any, tuple], bool]
    name: str = "custom"

    def fires(self, n, evalues, rejections, next_covariate, past=()) -> bool:
        try:
            return bool(self.predicate(n, evalues, rejections, next_covariate, past))
        except Exception as exc:
            raise RuleError(f"stopping rule {self.name!r} failed at n={n}: {exc}") from exc


def peek_rule(watch: int = 1) -> Custom:
    """Stop at n=1 if stream ``watch`` responded -1 at n=1, otherwise at n=2.

    On the foreteller scenario with d=1, stream 1 (0-based) at tick 1 is the
    first stream's second toss, so this stops at ``1 + 1{second toss = +1}``.
    """

    def predicate(n, evalues, rejections, next_covariate, past):
        return n >= 2 or past[0].y[watch] == -1

    return Custom(predicate, name="peek")


def evaluate_stop(rule, session: Session) -> bool:
    return rule.fires(session.n, session.evalues, session.rejections, session.next_covariate,
                      tuple(session.observed))


# --- runs --------------------------------------------------------------------


@dataclass
class StoppedResult:
    tau: int
    evalues: tuple[float, ...]
    rejections: frozenset[int]
    trajectory: list[Record] = field(repr=False)
    exhausted: bool = False


def _with_lookahead(stream: Iterable[Observation]) -> Iterator[tuple[Observation, Any]]:
    it = iter(stream)
    try:
        cur = next(it)
    except StopIteration:
        return
    for nxt in it:
        yield cur, nxt.x
        cur = nxt
    yield cur, None


def run(session: Session, stream: Iterable[Observation], rule) -> StoppedResult:
    """Step through ``stream`` until ``rule`` fires or the stream ends.

    Stream exhaustion is not an error: tau is then the last step and
    ``exhausted`` is set.
    """
    fired = False
    for obs, next_x in _with_lookahead(stream):
        session.step(obs, next_x)
        if evaluate_stop(rule, session):
            fired = True
            break
    if session.n == 0:
        raise ValueError("stream yielded no observations")
    return StoppedResult(
        tau=session.n,
        evalues=session.evalues,
        rejections=session.rejections,
        trajectory=list(session.history),
        exhausted=not fired,
    )


def rejection_mask(rejections: Iterable[int]) -> int:
    """Bitmask with bit g set for every rejected hypothesis g."""
    return sum(1 << g for g in rejections)


def write_trajectory(path: str | Path, trajectory: Sequence[Record]) -> None:
    """CSV with columns ``n, E_1..E_G, rejected_mask``."""
    if not trajectory:
        raise ValueError("empty trajectory")
    G = len(trajectory[0].evalues)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"E_{g + 1}" for g in range(G)] + ["rejected_mask"])
        for rec in trajectory:
            w.writerow([rec.n] + [repr(float(v)) for v in rec.evalues] + [rejection_mask(rec.rejections)])


def read_trajectory(path: str | Path) -> list[Record]:
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        G = len(header) - 2
        for row in rows:
            mask = int(row[-1])
            out.append(Record(int(row[0]), tuple(float(v) for v in row[1:1 + G]),
                              frozenset(g for g in range(G) if mask >> g & 1)))
    return out


