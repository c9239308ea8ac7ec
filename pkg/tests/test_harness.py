import json
from pathlib import Path

import pytest

from birthgrowth.errors import ConfigError
from birthgrowth.harness import CHECKS, load
from birthgrowth.harness.cli import main, shipped_configs
from birthgrowth.harness.config import from_dict
from birthgrowth.harness.report import read_rows

TINY = """
[experiment]
name = "tiny"
seed = 7
n = 60
horizon = 1.0

[window]
lo = [0.0, 0.0]
hi = [2.0, 2.0]
h = 0.1

[model]
kind = "poisson"
alpha = 0.5

[growth]
kind = "time_only"
speed = { family = "constant", value = 1.0 }

[evaluation]
times = [0.5, 1.0]
points = [[1.0, 1.0], [0.55, 1.45]]

[checks]
run = ["vex_identity", "poisson_coverage", "derivative_consistency", "capture_time"]
"""


@pytest.fixture
def tiny(tmp_path) -> Path:
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def raw_tiny():
    import tomli

    return tomli.loads(TINY)


# config validation -----------------------------------------------------------------


def test_shipped_configs_validate():
    names = shipped_configs()
    assert {"kjma", "staircase", "thinned", "free_space", "space_only", "single_nucleus", "atom"} <= set(names)
    for path in names.values():
        cfg = load(path)
        assert set(cfg.checks) <= set(CHECKS)


@pytest.mark.parametrize(
    "edit,where",
    [
        (lambda r: r["model"].update(kind="nope"), "model.kind"),
        (lambda r: r["window"].update(h=0.3), "window.h"),
        (lambda r: r["experiment"].update(n=0), "experiment.n"),
        (lambda r: r["evaluation"].update(times=[2.0]), "evaluation.times[0]"),
        (lambda r: r["evaluation"].update(points=[[5.0, 5.0]]), "evaluation.points[0]"),
        (lambda r: r.update(bogus={}), "bogus"),
        (lambda r: r["checks"].update(run=["no_such_check"]), "checks"),
        (lambda r: r["experiment"].update(n="many"), "experiment.n"),
    ],
)
def test_config_errors_name_the_field(edit, where):
    raw = raw_tiny()
    edit(raw)
    with pytest.raises(ConfigError, match=where.replace("[", r"\[").replace("]", r"\]")):
        from_dict(raw)


def test_padding_guard():
    raw = raw_tiny()
    raw["window"]["padding"] = 0.5
    with pytest.raises(ConfigError, match="padding"):
        from_dict(raw)
    raw["window"]["padding"] = 1.0
    assert from_dict(raw).model.window.lo == (-1.0, -1.0)


def test_fingerprint_ignores_output_but_not_seed(tiny):
    a = load(tiny)
    assert load(tiny, output="/elsewhere").fingerprint == a.fingerprint
    assert load(tiny, seed=8).fingerprint != a.fingerprint


# command line --------------------------------------------------------------------


def test_cli_list_and_validate(tiny, capsys):
    assert main(["list-checks"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in CHECKS)
    assert main(["validate-config", "--config", str(tiny)]) == 0
    assert "fingerprint=" in capsys.readouterr().out
    assert main(["validate-config", "--config", "kjma"]) == 0


def test_cli_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(TINY.replace('kind = "poisson"', 'kind = "mystery"'))
    assert main(["validate-config", "--config", str(bad)]) == 2
    assert "model.kind" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2


def _csvs(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


@pytest.mark.slow
def test_run_is_reproducible_and_labelled(tiny, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", "--config", str(tiny), "--out", str(a), "--threads", "1"]) == 0
    assert main(["run", "--config", str(tiny), "--out", str(b), "--threads", "1"]) == 0
    assert main(["run", "--config", str(tiny), "--out", str(c), "--threads", "3"]) == 0
    ca = _csvs(a)
    assert ca and ca == _csvs(b) == _csvs(c)
    summary = json.loads((a / "summary.json").read_text())
    assert summary["exit_status"] == 0
    assert {ch["name"] for ch in summary["checks"]} == {
        "vex_identity", "poisson_coverage", "derivative_consistency", "capture_time"}
    for path in a.glob("*.csv"):
        assert path.read_text().startswith(f"# fingerprint: {summary['fingerprint']}")
    rows = read_rows(a / "vex_identity.csv")
    assert rows and {"t", "x", "estimate", "oracle", "stderr", "z"} <= set(rows[0])
    assert (a / "capture_time_cdf.svg").exists()
    # report re-renders from stored tables alone
    for svg in a.glob("*.svg"):
        svg.unlink()
    assert main(["report", "--out", str(a)]) == 0
    assert (a / "vex_identity.svg").exists()


@pytest.mark.slow
def test_failing_check_sets_exit_status(tiny, tmp_path):
    # an impossible coverage tolerance turns a check red
    text = TINY + "\n[tolerances]\nz = 0.0\n"
    p = tmp_path / "strict.toml"
    p.write_text(text)
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o"), "--check", "vex_identity"]) == 1


@pytest.mark.slow
def test_negative_controls_do_not_gate(tmp_path):
    out = tmp_path / "atom"
    assert main(["run", "--config", "atom", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    (check,) = summary["checks"]
    assert check["negative_control"] and check["verdict"] == "fail" and check["as_expected"]
    assert (out / "capture_time_negative.json").exists()
