import json
from pathlib import Path

import pytest

from stopebh.cli import main
from stopebh.config import ConfigError, load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

GOOD = """\
seed: 3
alpha: 0.1
trials: 100
scenario:
  kind: correlated_coins
  horizon: 10
  theta: [0.5, 0.8]
processes:
  family: betting
rule:
  kind: fixed_horizon
  n: 10
checks: [fdr]
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_good_config_parses():
    cfg = parse_config(GOOD)
    assert cfg.alpha == 0.1 and cfg.scenario.G == 2 and len(cfg.processes) == 2


@pytest.mark.parametrize("edit,field,line", [
    (lambda t: t.replace("alpha: 0.1\n", ""), "alpha", None),
    (lambda t: t.replace("seed: 3\n", ""), "seed", None),
    (lambda t: t + "colour: blue\n", "colour", 14),
    (lambda t: t.replace("  n: 10", "  n: 10\n  m: 4"), "rule.m", 13),
    (lambda t: t.replace("alpha: 0.1", "alpha: 1.5"), "alpha", 2),
    (lambda t: t.replace("trials: 100", "trials: 50"), "trials", 3),
    (lambda t: t.replace("family: betting", "family: gaussian"), "processes.family", 9),
    (lambda t: t.replace("checks: [fdr]", "checks: [power]"), "checks", 13),
    (lambda t: t.replace("kind: fixed_horizon\n  n: 10", "kind: threshold\n  hypothesis: 3\n  level: 10"),
     "rule.hypothesis", 12),
])
def test_config_errors_name_field_and_line(edit, field, line):
    with pytest.raises(ConfigError) as info:
        parse_config(edit(GOOD), source="c.cfg")
    assert info.value.field == field
    if line is not None:
        assert info.value.line == line


def test_process_list_arity_mismatch():
    text = GOOD.replace("processes:\n  family: betting", "processes:\n  - family: betting")
    with pytest.raises(ConfigError, match="G=2"):
        parse_config(text)


def test_invalid_adjuster_rejected():
    text = GOOD.replace("family: betting", "family: betting\n  adjuster: {kind: custom, knots: [[1, 1], [2, 2]]}")
    with pytest.raises(ConfigError, match="not an adjuster"):
        parse_config(text)


def test_exact_mode_needs_foreteller():
    with pytest.raises(ConfigError, match="foreteller"):
        parse_config(GOOD.replace("trials: 100", "trials: 0"))


def test_overrides():
    cfg = parse_config(GOOD, overrides={"alpha": 0.2, "seed": 9, "trials": None})
    assert (cfg.alpha, cfg.seed, cfg.trials) == (0.2, 9, 100)


def test_bundled_configs_parse():
    names = sorted(p.name for p in CONFIGS.glob("*.cfg"))
    assert "counterexample.cfg" in names and "allnull_coins.cfg" in names
    for p in CONFIGS.glob("*.cfg"):
        load_config(p)


# --- the command line ---------------------------------------------------------------


def test_cli_missing_alpha_exits_nonzero(tmp_path, capsys):
    path = write(tmp_path, GOOD.replace("alpha: 0.1\n", ""))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "alpha" in capsys.readouterr().err


def test_cli_counterexample(tmp_path, capsys):
    out = tmp_path / "ce"
    assert main(["run", str(CONFIGS / "counterexample.cfg"), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["summary"]["expectation"] == 1.25
    assert doc["verdicts"] == {"violation": "VIOLATION-REPRODUCED"}
    assert "VIOLATION-REPRODUCED" in capsys.readouterr().out
    assert main(["report", str(out)]) == 0


def test_cli_allnull_coins_full_run(tmp_path):
    out = tmp_path / "coins"
    assert main(["run", str(CONFIGS / "allnull_coins.cfg"), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    s = doc["summary"]
    assert s["trials"] == 10_000
    assert s["mean_fdr"] <= 0.1 + 3 * s["std_error"]
    assert doc["verdicts"]["fdr"] == "PASS"


def test_cli_rerun_is_byte_identical(tmp_path):
    path = write(tmp_path, GOOD)
    for name in ("a", "b"):
        assert main(["run", str(path), "--out", str(tmp_path / name)]) == 0
    for f in ("summary.json", "trials.csv", "trajectory.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    header = (tmp_path / "a" / "trials.csv").read_text().splitlines()[0]
    assert header == "trial,tau,exhausted,fdp,rejected_mask,E_1,E_2"


def test_cli_flags_override(tmp_path):
    path = write(tmp_path, GOOD)
    out = tmp_path / "o"
    main(["run", str(path), "--out", str(out), "--trials", "200", "--seed", "4", "--alpha", "0.2"])
    doc = json.loads((out / "summary.json").read_text())
    assert (doc["config"]["trials"], doc["config"]["seed"], doc["config"]["alpha"]) == (200, 4, 0.2)
    assert doc["summary"]["trials"] == 200


def test_cli_failing_verdict_exits_one(tmp_path):
    # a raw look-ahead run that claims null e-values are valid must fail its check
    text = (CONFIGS / "counterexample.cfg").read_text().replace("checks: [violation]", "checks: [null_evalue]")
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 1


def test_cli_single_trajectory(tmp_path):
    path = write(tmp_path, GOOD.replace("trials: 100", "trials: 1").replace("checks: [fdr]\n", ""))
    out = tmp_path / "one"
    assert main(["run", str(path), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["mode"] == "single" and doc["summary"]["tau"] == 10
    assert (out / "trajectory.csv").read_text().startswith("n,E_1,E_2,rejected_mask")


def test_cli_verify_counterexample(capsys):
    assert main(["verify", "counterexample"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == 9 and all(l.startswith("PASS") for l in lines)


def test_cli_verify_adjusters():
    assert main(["verify", "adjusters"]) == 0


def test_cli_verify_unknown_suite():
    assert main(["verify", "nonsense"]) == 2


def test_cli_report_missing_dir(tmp_path):
    assert main(["report", str(tmp_path / "nothing")]) == 2
