"""Experiment configuration files.

A config is one YAML mapping. Unknown keys are rejected and every error names
the offending field and its line. Hypotheses are numbered from 1 in config
files (``hypothesis: 1`` is the first stream); the library itself is 0-based.

Example::

    seed: 7
    alpha: 0.1
    trials: 10000
    scenario:
      kind: correlated_coins     # correlated_coins | mvn | nb_glm | foreteller
      horizon: 50
      theta: [0.5, 0.5, 0.75, 0.8]
      rho: 0.9
    processes:                   # one mapping for all hypotheses, or a list of G
      family: betting            # betting | gaussian | sprt | universal_nb | catoni
    rule:
      kind: first_of
      rules:
        - {kind: fixed_horizon, n: 50}
        - {kind: rejection_count, k: 1}
    checks: [fdr]                # fdr | null_evalue | violation
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .adjuster import AdjusterSpec, AdjusterSpecError, adjuster_validity, custom_adjuster, load_adjuster_table
from .simlab import MVN, NBGLM, CorrelatedCoins, Foreteller, ScenarioSpec

CHECKS = ("fdr", "null_evalue", "violation")
TOP_KEYS = ("seed", "alpha", "trials", "scenario", "processes", "rule", "checks", "output")
FAMILIES = ("betting", "gaussian", "sprt", "universal_nb", "catoni")


class ConfigError(ValueError):
    def __init__(self, message: str, field: str = "", line: int | None = None, source: str = "<config>"):
        self.field = field
        self.line = line
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {field}: {message}" if field else f"{where}: {message}")


@dataclass(frozen=True)
class ProcessSpec:
    """A stepwise factor family with its parameters, plus an optional adjuster."""

    family: str
    params: dict = field(default_factory=dict)
    adjuster: AdjusterSpec | None = None


@dataclass(frozen=True)
class RuleSpec:
    kind: str
    params: dict = field(default_factory=dict)
    rules: tuple = ()


@dataclass
class ExperimentConfig:
    seed: int
    alpha: float
    trials: int
    scenario: ScenarioSpec
    processes: list[ProcessSpec]
    rule: RuleSpec
    checks: tuple[str, ...] = ()
    output: str | None = None
    source: str = "<config>"
    raw: dict = field(default_factory=dict, repr=False)


# --- YAML with line numbers ------------------------------------------------


def _line_map(node, path: str, lines: dict[str, int]) -> None:
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_map(v, f"{path}.{k.value}" if path else str(k.value), lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, f"{path}[{i}]", lines)


_REQUIRED = object()


class _Ctx:
    def __init__(self, source: str, lines: dict[str, int]):
        self.source = source
        self.lines = lines

    def error(self, path: str, message: str) -> ConfigError:
        line = self.lines.get(path)
        p = path
        while line is None and p:
            p = p.rsplit(".", 1)[0] if "." in p else ""
            line = self.lines.get(p)
        return ConfigError(message, field=path, line=line, source=self.source)


class _Section:
    def __init__(self, data: Any, path: str, ctx: _Ctx):
        if not isinstance(data, dict):
            raise ctx.error(path, f"expected a mapping, got {type(data).__name__}")
        self.data = dict(data)
        self.path = path
        self.ctx = ctx

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, kind: str, default: Any = _REQUIRED) -> Any:
        if key not in self.data:
            if default is _REQUIRED:
                raise self.ctx.error(self._p(key), "required field is missing")
            return default
        return _coerce(self.data.pop(key), kind, self._p(key), self.ctx)

    def done(self) -> None:
        if self.data:
            key = sorted(self.data)[0]
            raise self.ctx.error(self._p(key), "unknown key")


def _coerce(v: Any, kind: str, path: str, ctx: _Ctx) -> Any:
    def bad(what):
        return ctx.error(path, f"expected {what}, got {v!r}")

    def num(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or math.isnan(x):
            raise bad("a number")
        return float(x)

    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise bad("an integer")
        return v
    if kind == "float":
        return num(v)
    if kind == "str":
        if not isinstance(v, str):
            raise bad("a string")
        return v
    if kind == "floats":
        if not isinstance(v, list) or not v:
            raise bad("a non-empty list of numbers")
        return [num(x) for x in v]
    if kind == "matrix":
        if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
            raise bad("a list of rows")
        return [[num(x) for x in r] for r in v]
    if kind == "any":
        return v
    raise AssertionError(kind)


# --- sections ----------------------------------------------------------------


def _scenario(data: Any, seed: int, ctx: _Ctx) -> ScenarioSpec:
    sec = _Section(data, "scenario", ctx)
    kind = sec.take("kind", "str")
    horizon = sec.take("horizon", "int")
    if horizon < 1:
        raise ctx.error("scenario.horizon", "must be at least 1")
    try:
        if kind == "correlated_coins":
            model = CorrelatedCoins(tuple(sec.take("theta", "floats")), sec.take("rho", "float", 0.0))
        elif kind == "mvn":
            mean = sec.take("mean", "floats")
            if "cov" in sec.data:
                cov = sec.take("cov", "matrix")
            else:
                var = sec.take("variance", "float", 1.0)
                off = sec.take("off_diagonal", "float", 0.0)
                cov = [[var if i == j else off for j in range(len(mean))] for i in range(len(mean))]
            model = MVN(tuple(mean), tuple(map(tuple, cov)))
        elif kind == "nb_glm":
            beta = sec.take("beta", "floats")
            G = len(beta)

            def per_g(key, default):
                v = sec.take(key, "any", default)
                if isinstance(v, list):
                    return [_coerce(x, "float", f"scenario.{key}", ctx) for x in v]
                return [_coerce(v, "float", f"scenario.{key}", ctx)] * G

            model = NBGLM(
                tuple(beta),
                tuple(per_g("gamma", 0.0)),
                tuple(per_g("dispersion", 1.0)),
                covariate_p=sec.take("covariate_p", "float", 0.5),
                rho=sec.take("rho", "float", 0.0),
            )
        elif kind == "foreteller":
            model = Foreteller(sec.take("d", "int", 1), sec.take("theta", "float", 0.5))
        else:
            raise ctx.error("scenario.kind", f"unknown scenario kind {kind!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ctx.error("scenario", str(exc)) from None
    sec.done()
    return ScenarioSpec(model, horizon, seed)


def _adjuster(data: Any, path: str, ctx: _Ctx, base: Path) -> AdjusterSpec:
    sec = _Section(data, path, ctx)
    kind = sec.take("kind", "str")
    try:
        if kind == "power":
            spec = AdjusterSpec("power", k=sec.take("k", "float"))
        elif kind == "sqrt_minus_one":
            spec = AdjusterSpec("sqrt_minus_one")
        elif kind == "custom":
            if "table" in sec.data:
                spec = load_adjuster_table(base / sec.take("table", "str"))
            else:
                knots = sec.take("knots", "matrix")
                if any(len(k) != 2 for k in knots):
                    raise ctx.error(f"{path}.knots", "each knot must be [x, A(x)]")
                spec = custom_adjuster(knots)
        else:
            raise ctx.error(f"{path}.kind", f"unknown adjuster kind {kind!r}")
    except (AdjusterSpecError, OSError) as exc:
        raise ctx.error(path, str(exc)) from None
    sec.done()
    check = adjuster_validity(spec)
    if not check.passed:
        raise ctx.error(path, f"not an adjuster: integral of A(x)/x^2 is {check.integral_estimate:.6g}"
                              + (" (divergent)" if check.divergent else ""))
    return spec


_FAMILY_PARAMS = {
    "betting": {"null_theta": "float", "null_grid": "floats"},
    "gaussian": {"variance": "float", "eta": "float"},
    "sprt": {"null_p": "float", "alt_p": "float"},
    "universal_nb": {"dispersion": "float"},
    "catoni": {"mu": "float", "v": "float", "lam": "float", "side": "str"},
}


def _process(data: Any, path: str, ctx: _Ctx, base: Path) -> ProcessSpec:
    sec = _Section(data, path, ctx)
    family = sec.take("family", "str")
    if family not in _FAMILY_PARAMS:
        raise ctx.error(f"{path}.family", f"unknown family {family!r}; expected one of {FAMILIES}")
    params = {}
    for key, kind in _FAMILY_PARAMS[family].items():
        if key in sec.data:
            params[key] = sec.take(key, kind)
    if family == "gaussian" and params.get("variance", 1.0) <= 0:
        raise ctx.error(f"{path}.variance", "must be positive")
    if family == "universal_nb" and params.get("dispersion", 1.0) <= 0:
        raise ctx.error(f"{path}.dispersion", "must be positive")
    if family == "catoni" and params.get("side", "upper") not in ("upper", "lower", "two_sided"):
        raise ctx.error(f"{path}.side", "must be upper, lower or two_sided")
    if family == "sprt":
        for key in ("null_p", "alt_p"):
            if key not in params:
                raise ctx.error(f"{path}.{key}", "required field is missing")
            if not 0.0 < params[key] < 1.0:
                raise ctx.error(f"{path}.{key}", "must lie in (0, 1)")
    adjuster = None
    if "adjuster" in sec.data:
        adjuster = _adjuster(sec.data.pop("adjuster"), f"{path}.adjuster", ctx, base)
    sec.done()
    return ProcessSpec(family, params, adjuster)


_RULE_PARAMS = {
    "fixed_horizon": {"n": "int"},
    "threshold": {"hypothesis": "int", "level": "float"},
    "rejection_count": {"k": "int"},
    "peek": {"hypothesis": "int"},
}


def _rule(data: Any, path: str, ctx: _Ctx) -> RuleSpec:
    sec = _Section(data, path, ctx)
    kind = sec.take("kind", "str")
    if kind == "first_of":
        subs = sec.take("rules", "any")
        if not isinstance(subs, list) or not subs:
            raise ctx.error(f"{path}.rules", "expected a non-empty list of rules")
        sec.done()
        return RuleSpec("first_of", rules=tuple(_rule(r, f"{path}.rules[{i}]", ctx) for i, r in enumerate(subs)))
    if kind not in _RULE_PARAMS:
        raise ctx.error(f"{path}.kind", f"unknown rule kind {kind!r}")
    params = {}
    for key, k in _RULE_PARAMS[kind].items():
        default = 2 if (kind == "peek" and key == "hypothesis") else _REQUIRED
        params[key] = sec.take(key, k, default)
    sec.done()
    return RuleSpec(kind, params)


def _check_rule_arity(rule: RuleSpec, G: int, path: str, ctx: _Ctx) -> None:
    if rule.kind == "first_of":
        for i, r in enumerate(rule.rules):
            _check_rule_arity(r, G, f"{path}.rules[{i}]", ctx)
    elif "hypothesis" in rule.params and not 1 <= rule.params["hypothesis"] <= G:
        raise ctx.error(f"{path}.hypothesis", f"must lie in 1..{G}")


def parse_config(text: str, source: str = "<config>", base: Path | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate config text; ``overrides`` replace top-level keys (CLI flags)."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"cannot parse: {getattr(exc, 'problem', exc)}", line=line, source=source) from None
    lines: dict[str, int] = {}
    if node is not None:
        _line_map(node, "", lines)
    ctx = _Ctx(source, lines)
    base = base or Path(".")
    if overrides:
        if not isinstance(data, dict):
            raise ctx.error("", "expected a mapping at the top level")
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    top = _Section(data if data is not None else {}, "", ctx)
    unknown = sorted(set(top.data) - set(TOP_KEYS))
    if unknown:
        # report typos before "missing field" errors they would otherwise cause
        raise ctx.error(unknown[0], f"unknown key; expected one of {TOP_KEYS}")

    seed = top.take("seed", "int")
    alpha = top.take("alpha", "float")
    if not 0.0 < alpha < 1.0:
        raise ctx.error("alpha", "must lie in (0, 1)")
    trials = top.take("trials", "int")
    scenario = _scenario(top.take("scenario", "any"), seed, ctx)
    G = scenario.G

    procs_raw = top.take("processes", "any")
    if isinstance(procs_raw, list):
        processes = [_process(p, f"processes[{i}]", ctx, base) for i, p in enumerate(procs_raw)]
        if len(processes) != G:
            raise ctx.error("processes", f"scenario has G={G} hypotheses but {len(processes)} processes are given")
    else:
        processes = [_process(procs_raw, "processes", ctx, base)] * G

    rule = _rule(top.take("rule", "any"), "rule", ctx)
    _check_rule_arity(rule, G, "rule", ctx)

    checks = top.take("checks", "any", [])
    if not isinstance(checks, list) or any(c not in CHECKS for c in checks):
        raise ctx.error("checks", f"expected a list drawn from {CHECKS}")
    output = top.take("output", "str", None)
    top.done()

    if trials < 0 or 1 < trials < 100:
        raise ctx.error("trials", "must be 0 (exact enumeration), 1 (one trajectory) or at least 100")
    if trials == 1 and checks:
        raise ctx.error("checks", "a single trajectory (trials: 1) has no bounds to check")
    if trials == 0 and scenario.model.kind != "foreteller":
        raise ctx.error("trials", "exact enumeration (trials: 0) is only available for the foreteller scenario")
    if trials == 0 and scenario.horizon + scenario.model.d > 20:
        raise ctx.error("scenario.horizon", "too long for exact enumeration")
    _check_family_fits(processes, scenario, ctx)

    return ExperimentConfig(seed, alpha, trials, scenario, processes, rule, tuple(checks), output, source, data)


def _check_family_fits(processes: list[ProcessSpec], scenario: ScenarioSpec, ctx: _Ctx) -> None:
    kind = scenario.model.kind
    allowed = {
        "correlated_coins": {"betting", "catoni"},
        "foreteller": {"betting", "catoni"},
        "mvn": {"gaussian", "catoni"},
        "nb_glm": {"universal_nb", "catoni"},
    }[kind]
    for g, p in enumerate(processes):
        if p.family not in allowed and not (p.family == "sprt" and kind in ("correlated_coins", "foreteller")):
            raise ctx.error(f"processes[{g}].family" if len(set(map(id, processes))) > 1 else "processes.family",
                            f"family {p.family!r} does not fit scenario {kind!r}")


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), source=str(path)) from None
    return parse_config(text, source=str(path), base=path.parent, overrides=overrides)
