"""Report bundle: CSV tables, JSON identity reports, SVG plots and a summary.

Every file starts with the configuration fingerprint.  Nothing time-dependent
(timestamps, runtimes) goes into the CSV tables, so reruns with the same seed
produce byte-identical CSVs.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .checks import IdentityReport  # noqa: E402

# fixed SVG metadata keeps plots reproducible too
_SVG_META = {"Date": None, "Creator": None}


def _header(fh, fingerprint: str, extra: dict | None = None) -> None:
    fh.write(f"# fingerprint: {fingerprint}\n")
    for k, v in (extra or {}).items():
        fh.write(f"# {k}: {v}\n")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    return v


def write_rows(path: Path, rows: list[dict], fingerprint: str, extra: dict | None = None) -> Path:
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        _header(fh, fingerprint, extra)
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in cols])
    return path


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        row = {}
        for k, v in r.items():
            try:
                row[k] = json.loads(v)
            except (json.JSONDecodeError, TypeError):
                row[k] = v
        out.append(row)
    return out


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def report_stem(rep: IdentityReport) -> str:
    return f"{rep.name}_negative" if rep.negative_control and not rep.name.endswith("_negative") else rep.name


def write_report(rep: IdentityReport, out: Path) -> list[Path]:
    stem = report_stem(rep)
    meta = {"check": rep.name, "verdict": rep.verdict, "negative_control": rep.negative_control, "oracle": rep.oracle}
    paths = [write_rows(out / f"{stem}.csv", rep.rows, rep.fingerprint, meta)]
    p = out / f"{stem}.json"
    p.write_text(json.dumps(_json_safe(rep.as_dict()), indent=2, sort_keys=True) + "\n")
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_rows(name: str, rows: list[dict], path: Path, title: str = "") -> Path | None:
    """Estimate-vs-oracle picture for whatever columns a check table carries."""
    if not rows:
        return None
    keys = rows[0].keys()
    fig, ax = plt.subplots(figsize=(5, 4))
    if {"estimate", "oracle", "t"} <= set(keys):
        # density curves: estimate with 3 SE bars against the oracle, per point
        by_x: dict = {}
        for r in rows:
            by_x.setdefault(json.dumps(r.get("x", r.get("box"))), []).append(r)
        for k, (lab, rs) in enumerate(sorted(by_x.items())):
            rs = sorted(rs, key=lambda r: r["t"])
            t = np.array([r["t"] for r in rs], dtype=float)
            ax.errorbar(t + 0.004 * k, [r["estimate"] for r in rs], yerr=[3 * _f(r.get("stderr")) for r in rs],
                        fmt="o", ms=3, capsize=2, label=f"MC {lab}" if k < 5 else None)
            ax.plot(t, [r["oracle"] for r in rs], "k-", lw=0.8, label="oracle" if k == 0 else None)
        ax.set_xlabel("t")
        ax.set_ylabel(name)
    elif {"rate", "finite_difference"} <= set(keys):
        a = np.array([r["rate"] for r in rows], dtype=float)
        b = np.array([r["finite_difference"] for r in rows], dtype=float)
        ax.plot(b, a, "o", ms=4)
        lim = [min(a.min(), b.min()), max(a.max(), b.max())]
        ax.plot(lim, lim, "k-", lw=0.8)
        ax.set_xlabel("central difference")
        ax.set_ylabel("cone rate")
    elif {"d_dt_integral", "G_surface_integral"} <= set(keys):
        lab = [f"{r['branch']} t={r['t']}" for r in rows]
        pos = np.arange(len(rows))
        ax.bar(pos - 0.2, [r["d_dt_integral"] for r in rows], 0.4, label="d/dt volume")
        ax.bar(pos + 0.2, [r["G_surface_integral"] for r in rows], 0.4,
               yerr=[3 * _f(r["G_surface_stderr"]) for r in rows], label="G x surface")
        ax.set_xticks(pos, lab)
    elif {"accepted_per_realization", "compensator_per_realization"} <= set(keys):
        pos = np.arange(len(rows))
        ax.errorbar(pos, [r["accepted_per_realization"] for r in rows], yerr=[3 * _f(r["stderr"]) for r in rows],
                    fmt="o", ms=3, capsize=2, label="accepted")
        ax.plot(pos, [r["compensator_per_realization"] for r in rows], "kx", label="compensator")
        ax.set_xlabel("bin")
    elif {"r", "estimate", "quantity"} <= set(keys):
        for q in sorted({r["quantity"] for r in rows}):
            rs = [r for r in rows if r["quantity"] == q]
            ax.errorbar([r["r"] for r in rs], [r["estimate"] for r in rs], yerr=[3 * _f(r["stderr"]) for r in rs],
                        fmt="o-", ms=3, capsize=2, label=q)
        ax.set_xlabel("Minkowski radius r")
    elif {"dVV_dt", "difference"} <= set(keys):
        ax.errorbar(np.arange(len(rows)), [r["difference"] for r in rows], yerr=[3 * _f(r["stderr"]) for r in rows],
                    fmt="o", ms=3, capsize=2)
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_ylabel("dV_V/dt - (1 - V_V) dV_ex/dt")
    else:
        plt.close(fig)
        return None
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    ax.set_title(title or name, fontsize=9)
    return _save(fig, path)


def _f(v) -> float:
    try:
        v = float(v)
    except (TypeError, ValueError):
        return 0.0
    return v if math.isfinite(v) else 0.0


def plot_cdf(sample_times: np.ndarray, n: int, oracle: tuple[np.ndarray, np.ndarray] | None, path: Path,
             horizon: float, title: str = "capture time") -> Path:
    """Empirical CDF of capture times (censored mass stays above the curve) with the oracle overlay."""
    fig, ax = plt.subplots(figsize=(5, 4))
    t = np.sort(np.asarray(sample_times, dtype=float))
    if t.size:
        ax.step(np.concatenate([[0.0], t, [horizon]]), np.concatenate([[0.0], np.arange(1, t.size + 1) / n, [t.size / n]]),
                where="post", label=f"empirical (n={n})")
    if oracle is not None:
        ax.plot(oracle[0], oracle[1], "k--", lw=1, label="oracle")
    ax.set_xlabel("t")
    ax.set_ylabel("P(T(x) <= t)")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    return _save(fig, path)


def render(out: Path) -> list[Path]:
    """Re-draw every plot from the tables already in ``out``."""
    out = Path(out)
    made = []
    for p in sorted(out.glob("*.json")):
        data = json.loads(p.read_text())
        rows_path = p.with_suffix(".csv")
        if "rows" not in data or not rows_path.exists():
            continue
        q = plot_rows(data["name"], read_rows(rows_path), p.with_suffix(".svg"), data.get("identity", ""))
        if q:
            made.append(q)
    cap = out / "capture_time_sample.csv"
    if cap.exists():
        meta = json.loads(cap.with_suffix(".json").read_text())
        times = np.array([float(r["capture_time"]) for r in read_rows(cap)])
        oracle = None
        op = out / "capture_time_oracle.csv"
        if op.exists():
            rows = read_rows(op)
            oracle = (np.array([r["t"] for r in rows], float), np.array([r["cdf"] for r in rows], float))
        made.append(plot_cdf(times, int(meta["n_realizations"]), oracle, out / "capture_time_cdf.svg",
                             float(meta["censoring_time"])))
    return made
