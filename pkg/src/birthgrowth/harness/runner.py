"""Build an ensemble, run the configured checks and write the report bundle."""

from __future__ import annotations

import json
import logging
import traceback
from pathlib import Path

from .. import causal_cone as cc
from ..estimators import estimate_Vex, estimate_VV
from ..nucleation import ANALYTIC_KINDS
from . import report
from .checks import CHECKS, Context, IdentityReport, run_check
from .config import ExperimentConfig

log = logging.getLogger(__name__)


def _failed(name: str, exc: BaseException, negative: bool) -> IdentityReport:
    return IdentityReport(
        name, CHECKS[name].__doc__.strip().splitlines()[0], "none", [], "error", negative,
        notes=[f"{type(exc).__name__}: {exc}", traceback.format_exc(limit=3)],
    )


def _write_densities(ctx: Context, out: Path) -> None:
    cfg = ctx.cfg
    fp = cfg.fingerprint
    _ = ctx.main
    for t in cfg.times:
        for est in (estimate_VV(ctx.ens, t, cfg.grid), estimate_Vex(ctx.ens, t, cfg.grid)):
            est.to_csv(out / f"density_{est.quantity}_t{t:g}.csv", {"fingerprint": fp, "saturated": est.saturated})


def _write_oracles(ctx: Context, out: Path) -> None:
    cfg = ctx.cfg
    if cfg.model.kind not in ANALYTIC_KINDS or not cfg.model.in_class_g:
        return
    rows = cc.evaluate_batch(cfg.pairs(), cfg.growth, cfg.model, cfg.tolerances["cone_abs"])
    rows = [{**r, "x": list(r["x"])} for r in rows]
    report.write_rows(out / "cone_oracle.csv", rows, cfg.fingerprint, {"oracle": "cone quadrature"})


def _write_capture(ctx: Context, out: Path) -> None:
    sample = getattr(ctx, "capture_sample", None)
    if sample is None:
        return
    fp = ctx.cfg.fingerprint
    sample.to_csv(out / "capture_time_sample.csv", {"fingerprint": fp})
    grid_oracle = getattr(ctx, "capture_oracle", None)
    if grid_oracle is not None:
        rows = [{"t": float(t), "cdf": float(f)} for t, f in zip(*grid_oracle)]
        report.write_rows(out / "capture_time_oracle.csv", rows, fp)
    counts, edges = sample.histogram()
    rows = [{"lo": float(a), "hi": float(b), "density": float(c)} for a, b, c in zip(edges[:-1], edges[1:], counts)]
    report.write_rows(out / "capture_time_histogram.csv", rows, fp, {"bin_width": "Freedman-Diaconis (descriptive only)"})


def run_experiment(
    cfg: ExperimentConfig,
    out: Path | None = None,
    checks: list[str] | None = None,
    negative_controls: bool = False,
    workers: int | None = None,
) -> tuple[dict, int]:
    """Run the experiment and write everything under ``out``.

    Returns the summary and the process exit status: nonzero iff a check that
    is not a negative control fails or errors.
    """
    out = Path(out if out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, workers=workers)
    names = list(checks) if checks else list(cfg.checks)
    for c in names:
        if c not in CHECKS:
            raise KeyError(f"unknown check {c!r}")
    jobs = [(c, False) for c in names]
    if negative_controls:
        jobs += [(c, True) for c in cfg.negative_controls if not checks or c in checks]
    reports: list[IdentityReport] = []
    for name, neg in jobs:
        log.info("running %s%s", name, " (negative control)" if neg else "")
        try:
            rep = run_check(ctx, name, negative=neg)
        except Exception as exc:  # isolate per-check failures
            log.exception("check %s raised", name)
            rep = _failed(name, exc, neg or cfg.all_negative)
            rep.fingerprint = cfg.fingerprint
        reports.append(rep)
        report.write_report(rep, out)
        log.info("%s: %s", name, rep.verdict)

    (out / "config.json").write_text(
        json.dumps({"fingerprint": cfg.fingerprint, "config": cfg.raw}, indent=2, sort_keys=True, default=str) + "\n"
    )
    if any(r.rows for r in reports):
        _write_densities(ctx, out)
    _write_oracles(ctx, out)
    _write_capture(ctx, out)
    report.render(out)

    gating = [r for r in reports if not r.negative_control]
    status = int(any(r.verdict in ("fail", "error") for r in gating))
    summary = {
        "fingerprint": cfg.fingerprint,
        "experiment": cfg.name,
        "seed": cfg.seed,
        "n": cfg.n,
        "saturated_realizations": int(ctx.main.saturated) if "main" in ctx.__dict__ else 0,
        "exit_status": status,
        "passed": status == 0,
        "checks": [
            {
                "name": r.name,
                "verdict": r.verdict,
                "negative_control": r.negative_control,
                "as_expected": r.as_expected,
                "gates_exit_status": not r.negative_control and r.verdict != "info",
                "runtime_s": r.runtime_s,
            }
            for r in reports
        ],
    }
    (out / "summary.json").write_text(json.dumps(report._json_safe(summary), indent=2, sort_keys=True) + "\n")
    return summary, status

