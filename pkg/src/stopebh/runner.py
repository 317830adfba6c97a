"""Turn an ``ExperimentConfig`` into processes, rules, a run and its artifact files."""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .adjuster import LiftedProcess
from .config import ExperimentConfig, ProcessSpec, RuleSpec
from .ebh import fdp
from .eprocess import (
    InfimumProcess,
    UniversalNBProcess,
    betting_process,
    catoni_process,
    gaussian_process,
    sprt_process,
    two_sided_catoni_process,
)
from .session import (
    FirstOf,
    FixedHorizon,
    RejectionCount,
    Session,
    Threshold,
    peek_rule,
    rejection_mask,
    run,
    write_trajectory,
)
from .simlab import GENERATOR_NAME, enumerate_foreteller, generate, mc_fdr

PASSING = ("PASS", "VIOLATION-REPRODUCED")


def build_process(spec: ProcessSpec):
    p = spec.params
    if spec.family == "betting":
        if "null_grid" in p:
            proc = InfimumProcess([betting_process(t) for t in p["null_grid"]])
        else:
            proc = betting_process(p.get("null_theta", 0.5))
    elif spec.family == "gaussian":
        proc = gaussian_process(p.get("variance", 1.0), p.get("eta", 0.5))
    elif spec.family == "sprt":
        p0, p1 = p["null_p"], p["alt_p"]
        proc = sprt_process(lambda y, x: p0 if y == 1 else 1.0 - p0,
                            lambda y, x: p1 if y == 1 else 1.0 - p1)
    elif spec.family == "universal_nb":
        proc = UniversalNBProcess(p.get("dispersion", 1.0))
    elif spec.family == "catoni":
        mu, v, lam = p.get("mu", 0.0), p.get("v", 1.0), p.get("lam", 0.5)
        side = p.get("side", "upper")
        if side == "two_sided":
            proc = two_sided_catoni_process(lambda x: mu, lambda x: v, lam)
        else:
            proc = catoni_process(lambda x: mu, lambda x: v, lam, side)
    else:
        raise ValueError(f"unknown family {spec.family!r}")
    if spec.adjuster is not None:
        proc = LiftedProcess(proc, spec.adjuster, check=False)
    return proc


def build_rule(spec: RuleSpec):
    k = spec.kind
    if k == "first_of":
        return FirstOf(build_rule(r) for r in spec.rules)
    if k == "fixed_horizon":
        return FixedHorizon(spec.params["n"])
    if k == "threshold":
        return Threshold(spec.params["hypothesis"] - 1, spec.params["level"])
    if k == "rejection_count":
        return RejectionCount(spec.params["k"])
    if k == "peek":
        return peek_rule(spec.params["hypothesis"] - 1)
    raise ValueError(f"unknown rule kind {k!r}")


@dataclass
class RunReport:
    config: dict
    mode: str
    summary: dict
    verdicts: dict[str, str]
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v in PASSING for v in self.verdicts.values())


def _verdicts(cfg: ExperimentConfig, summary: dict, exact: bool) -> dict[str, str]:
    slack = 0.0 if exact else 3.0
    out = {}
    for check in cfg.checks:
        if check == "fdr":
            ok = summary["mean_fdr"] <= cfg.alpha + slack * summary["std_error"]
            out["fdr"] = "PASS" if ok else "FAIL"
        elif check == "null_evalue":
            ok = all(m <= 1.0 + slack * summary["null_evalue_se"][g]
                     for g, m in summary["null_mean_evalues"].items())
            out["null_evalue"] = "PASS" if ok else "FAIL"
        elif check == "violation":
            m = summary["mean_evalues"][0]
            se = summary["evalue_se"][0]
            out["violation"] = "VIOLATION-REPRODUCED" if m > 1.0 + slack * se else "VIOLATION-NOT-REPRODUCED"
    return out


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunReport:
    """Execute the configured experiment and (if ``out_dir`` is given) write its artifacts.

    Files: ``summary.json`` (config echo, summary, verdicts), ``trials.csv``,
    ``trajectory.csv`` and ``runtime.json`` (wall time; the only file that is
    not reproduced byte for byte on a re-run).
    """
    started = time.perf_counter()
    scenario = cfg.scenario
    G = scenario.G
    truth = scenario.is_null
    rule = build_rule(cfg.rule)

    def factory():
        return [build_process(p) for p in cfg.processes]

    trial_rows: list[list[Any]] = []
    if cfg.trials == 0:
        mode = "exact"
        ex = enumerate_foreteller(scenario.model, scenario.horizon, factory, rule, cfg.alpha, keep_records=True)
        nulls = [g for g in range(G) if truth[g]]
        summary = {
            "paths": ex.paths,
            "mean_fdr": ex.mean_fdr,
            "std_error": 0.0,
            "mean_evalues": list(ex.mean_evalues),
            "evalue_se": [0.0] * G,
            "null_mean_evalues": {g + 1: ex.mean_evalues[g] for g in nulls},
            "null_evalue_se": {g + 1: 0.0 for g in nulls},
            "rejection_freq": list(ex.rejection_freq),
            "mean_tau": ex.mean_tau,
            "expectation": ex.mean_evalues[0],
        }
        header = ["path", "probability", "tau", "fdp", "rejected_mask"] + [f"E_{g + 1}" for g in range(G)]
        for rec in ex.records:
            trial_rows.append([" ".join(f"{v:+d}" for v in rec.path), repr(rec.weight), rec.tau,
                               repr(fdp(rec.rejections, truth)), rejection_mask(rec.rejections)]
                              + [repr(v) for v in rec.evalues])
        trajectory = ex.records[0].trajectory if ex.records else []
    elif cfg.trials == 1:
        mode = "single"
        stream = generate(scenario)
        res = run(Session(factory(), cfg.alpha), stream, rule)
        summary = {
            "tau": res.tau,
            "exhausted": res.exhausted,
            "evalues": list(res.evalues),
            "rejections": sorted(g + 1 for g in res.rejections),
            "fdp": fdp(res.rejections, truth),
        }
        header = ["trial", "tau", "exhausted", "fdp", "rejected_mask"] + [f"E_{g + 1}" for g in range(G)]
        trial_rows.append([0, res.tau, int(res.exhausted), repr(summary["fdp"]), rejection_mask(res.rejections)]
                          + [repr(v) for v in res.evalues])
        trajectory = res.trajectory
    else:
        mode = "monte_carlo"
        mc = mc_fdr(scenario, factory, rule, cfg.trials, cfg.alpha)
        ev = np.array([r.evalues for r in mc.records])
        summary = {
            "trials": mc.trials,
            "mean_fdr": mc.mean_fdr,
            "std_error": mc.std_error,
            "mean_evalues": [float(v) for v in ev.mean(axis=0)],
            "evalue_se": [float(v) for v in ev.std(axis=0, ddof=1) / np.sqrt(mc.trials)],
            "null_mean_evalues": {g + 1: m for g, m in mc.null_mean_evalues.items()},
            "null_evalue_se": {g + 1: s for g, s in mc.null_evalue_se.items()},
            "rejection_freq": list(mc.rejection_freq),
            "mean_tau": mc.mean_tau,
        }
        header = ["trial", "tau", "exhausted", "fdp", "rejected_mask"] + [f"E_{g + 1}" for g in range(G)]
        for r in mc.records:
            trial_rows.append([r.trial, r.tau, int(r.exhausted), repr(r.fdp), rejection_mask(r.rejections)]
                              + [repr(v) for v in r.evalues])
        trajectory = mc.first_trajectory

    verdicts = _verdicts(cfg, summary, exact=(mode == "exact")) if mode != "single" else {}
    config_echo = dict(cfg.raw)
    config_echo.update(seed=cfg.seed, alpha=cfg.alpha, trials=cfg.trials)
    report = RunReport(
        config=config_echo,
        mode=mode,
        summary=summary,
        verdicts=verdicts,
        metadata={
            "seed": cfg.seed,
            "generator": GENERATOR_NAME,
            "package_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wall_time_s": time.perf_counter() - started,
        },
    )
    if out_dir is not None:
        write_report(report, Path(out_dir), header, trial_rows, trajectory)
    return report


def write_report(report: RunReport, out: Path, header, rows, trajectory) -> None:
    out.mkdir(parents=True, exist_ok=True)
    stable_meta = {k: v for k, v in report.metadata.items() if k != "wall_time_s"}
    doc = {
        "config": report.config,
        "mode": report.mode,
        "summary": report.summary,
        "verdicts": report.verdicts,
        "passed": report.passed,
        "metadata": stable_meta,
    }
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    (out / "runtime.json").write_text(json.dumps({"wall_time_s": report.metadata["wall_time_s"]}) + "\n")
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    if trajectory:
        write_trajectory(out / "trajectory.csv", trajectory)


def load_summary(results_dir: str | Path) -> dict:
    return json.loads((Path(results_dir) / "summary.json").read_text())
