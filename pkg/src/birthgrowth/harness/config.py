"""Experiment configuration: TOML file -> validated :class:`ExperimentConfig`.

Every problem is reported as a :class:`~birthgrowth.errors.ConfigError`
carrying the dotted path of the offending field, and validation finishes
before anything is sampled.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import BirthGrowthError, ConfigError
from ..families import (
    Constant,
    UniformBox,
    marks_from_spec,
    space_speed_values,
    temporal_from_spec,
    time_speed_from_spec,
)
from ..grid import Box, Grid, ScalarField
from ..growth import GrowthField
from ..nucleation import KINDS, NucleationModel
from ..simulate import Ensemble

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_TOLERANCES = {
    "z": 3.0,
    "coverage_fraction": 0.95,
    "cone_abs": 1e-6,
    "fd_quadrature_tol": 1e-10,
    "derivative_rel": 1e-3,
    "derivative_delta": 1e-3,
    "identity_rel": 1e-6,
    "algebraic_rel": 1e-12,
    "evolution_allowance": 0.05,
    "surface_allowance": 0.02,
    "ks_coefficient": 1.63,
    "min_bin_expected": 20.0,
    "family_alpha": 0.0027,
    "sweep_spread": 0.03,
}

KNOWN_CHECKS = (
    "vex_identity",
    "poisson_coverage",
    "derivative_consistency",
    "extended_surface",
    "evolution_equations",
    "poisson_vv_vex",
    "capture_time",
    "thinned_intensity",
    "minkowski_sweep",
)

_SECTIONS = {"experiment", "window", "model", "growth", "evaluation", "tolerances", "checks"}


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the canonical dict."""

    raw: dict
    name: str
    seed: int
    n: int
    horizon: float
    workers: int
    output: Path
    window: Box
    h: float
    padding: float
    model: NucleationModel
    growth: GrowthField
    times: tuple[float, ...]
    points: tuple[tuple[float, ...], ...]
    test_box: Box
    surface_h: float
    sweep_radii_h: tuple[float, ...]
    surface_radius_h: float
    fd_step: float
    evolution_times: tuple[float, ...]
    time_bins: tuple[tuple[float, float], ...]
    space_bins: tuple[int, ...]
    tolerances: dict
    checks: tuple[str, ...]
    negative_controls: tuple[str, ...]
    all_negative: bool = False
    alpha: float | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def grid(self) -> Grid:
        return Grid(self.window, self.h)

    @property
    def surface_grid(self) -> Grid:
        return Grid(self.test_box, self.surface_h)

    @property
    def surface_radius(self) -> float:
        return self.surface_radius_h * self.surface_h

    @property
    def sweep_radii(self) -> tuple[float, ...]:
        return tuple(k * self.surface_h for k in self.sweep_radii_h)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.raw)

    def ensemble(self, workers: int | None = None) -> Ensemble:
        return Ensemble(
            self.model,
            self.growth,
            self.horizon,
            self.seed,
            self.n,
            self.grid,
            self.fingerprint,
            self.workers if workers is None else workers,
        )

    def pairs(self, limit: int | None = None) -> list[tuple[float, tuple[float, ...]]]:
        out = [(t, x) for t in self.times for x in self.points]
        return out if limit is None else out[:limit]


def fingerprint(raw: dict) -> str:
    """Short hash of the canonical JSON form of a configuration.

    The output directory is left out: it does not change any result.
    """
    raw = {**raw, "experiment": {k: v for k, v in raw.get("experiment", {}).items() if k != "output"}}
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load(path, seed: int | None = None, output: str | None = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if seed is not None:
        raw.setdefault("experiment", {})["seed"] = int(seed)
    if output is not None:
        raw.setdefault("experiment", {})["output"] = str(output)
    return from_dict(raw, base_dir=path.parent)


def _get(d: dict, key: str, path: str, kind=float, default: Any = ...):
    if key not in d:
        if default is ...:
            raise ConfigError("missing required field", f"{path}.{key}")
        return default
    v = d[key]
    try:
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            v = float(v)
            if not math.isfinite(v):
                raise ValueError
        elif kind is int:
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise TypeError
            v = int(v)
        elif kind is str:
            if not isinstance(v, str):
                raise TypeError
        return v
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {v!r}", f"{path}.{key}") from None


def _box(d: Any, path: str) -> Box:
    if not isinstance(d, dict) or "lo" not in d or "hi" not in d:
        raise ConfigError("expected a table with 'lo' and 'hi'", path)
    try:
        return Box(tuple(float(v) for v in d["lo"]), tuple(float(v) for v in d["hi"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def _model(spec: dict, window: Box, path: str) -> tuple[NucleationModel, float | None]:
    if not isinstance(spec, dict):
        raise ConfigError("expected a table", path)
    kind = _get(spec, "kind", path, str)
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r} (known: {', '.join(KINDS)})", f"{path}.kind")
    try:
        if kind in ("thinned", "free_space"):
            base, alpha = _model(spec.get("base"), window, f"{path}.base")
            if kind == "thinned":
                return NucleationModel.thinned(base), alpha
            return NucleationModel.free_space(base, _box(spec.get("region"), f"{path}.region")), alpha
        alpha = None
        if "alpha" in spec:
            if kind != "poisson":
                raise ConfigError("'alpha' is only meaningful for poisson models", f"{path}.alpha")
            alpha = _get(spec, "alpha", path)
            if alpha < 0:
                raise ConfigError("alpha must be >= 0", f"{path}.alpha")
            temporal = Constant(alpha * window.volume)
            marks = UniformBox()
        else:
            temporal = temporal_from_spec(spec.get("temporal"), f"{path}.temporal")
            marks = marks_from_spec(spec.get("marks", {"family": "uniform_box"}), f"{path}.marks")
        return NucleationModel(kind, window, temporal, marks), alpha
    except ConfigError as exc:
        if exc.path:
            raise
        raise ConfigError(str(exc), path) from None


def _growth(spec: dict, grid: Grid, horizon: float, path: str) -> GrowthField:
    if not isinstance(spec, dict):
        raise ConfigError("expected a table", path)
    kind = _get(spec, "kind", path, str)
    speed = spec.get("speed")
    if not isinstance(speed, dict):
        raise ConfigError("expected a table", f"{path}.speed")
    if kind == "time_only":
        # tabulate past the horizon so derivative checks can step beyond it
        return GrowthField.time_only(time_speed_from_spec(speed, f"{path}.speed"), 1.1 * horizon)
    if kind == "space_only":
        vals = space_speed_values(speed, grid.mesh(), f"{path}.speed")
        return GrowthField.space_only(
            ScalarField(grid, vals),
            _get(spec, "g0", path, default=None),
            _get(spec, "G0", path, default=None),
            _get(spec, "init_radius", path, default=None),
        )
    raise ConfigError(f"unknown growth kind {kind!r} (time_only or space_only)", f"{path}.kind")


def _max_speed(spec: dict, path: str, horizon: float) -> float | None:
    """Upper speed bound on ``[0, horizon]`` known before the grid exists."""
    speed = spec.get("speed", {})
    if "G0" in spec:
        return _get(spec, "G0", path)
    fam = speed.get("family")
    if fam == "constant":
        return _get(speed, "value", f"{path}.speed")
    if fam == "linear":
        a, b = _get(speed, "a", f"{path}.speed"), _get(speed, "b", f"{path}.speed")
        return max(a, a + b * horizon)
    if fam == "table":
        return max(float(v) for v in speed.get("values", [0.0]))
    if fam == "two_halfspace":
        return max(_get(speed, "left", f"{path}.speed"), _get(speed, "right", f"{path}.speed"))
    if fam == "gaussian_bump":
        return _get(speed, "base", f"{path}.speed") + max(_get(speed, "amplitude", f"{path}.speed"), 0.0)
    if fam == "inline":
        return float(np.max(speed.get("values", [0.0])))
    return None


def _on_lattice(extent: np.ndarray, h: float) -> bool:
    n = extent / h
    return bool(np.all(np.abs(n - np.rint(n)) <= 1e-6 * np.maximum(n, 1.0)))


def from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    exp = raw.get("experiment", {})
    name = _get(exp, "name", "experiment", str, "experiment")
    seed = _get(exp, "seed", "experiment", int)
    if seed < 0:
        raise ConfigError("seed must be >= 0", "experiment.seed")
    n = _get(exp, "n", "experiment", int)
    if n < 1:
        raise ConfigError("ensemble size must be >= 1", "experiment.n")
    horizon = _get(exp, "horizon", "experiment")
    if not horizon > 0:
        raise ConfigError("horizon must be positive", "experiment.horizon")
    workers = _get(exp, "workers", "experiment", int, 1)
    output = Path(_get(exp, "output", "experiment", str, f"out/{name}"))
    all_negative = bool(exp.get("negative_control", False))

    win = raw.get("window", {})
    window = _box(win, "window")
    h = _get(win, "h", "window")
    if not h > 0:
        raise ConfigError("grid spacing must be positive", "window.h")
    if not _on_lattice(np.subtract(window.hi, window.lo), h):
        raise ConfigError("window extent must be a multiple of h", "window.h")

    gspec = raw.get("growth")
    if not isinstance(gspec, dict):
        raise ConfigError("missing required section", "growth")
    gmax = _max_speed(gspec, "growth", horizon)
    padding = _get(win, "padding", "window", default=None)
    if padding is None:
        if gmax is None:
            raise ConfigError("cannot infer a speed bound; set window.padding or growth.G0", "window.padding")
        padding = gmax * horizon
        padding = math.ceil(padding / h - 1e-9) * h
    if padding < 0 or not _on_lattice(np.array([padding]), h):
        raise ConfigError("padding must be a nonnegative multiple of h", "window.padding")
    nucl_window = window.pad(padding)
    pad_grid = Grid(nucl_window, h)

    model, alpha = _model(raw.get("model"), nucl_window, "model")
    growth = _growth(gspec, pad_grid, horizon, "growth")
    g_top = growth.G0 if growth.kind == "space_only" else float(growth.speed_at_time(np.linspace(0, horizon, 2001)).max())
    if padding < g_top * horizon * (1 - 1e-9):
        raise ConfigError(
            f"padding {padding} is below G_max * horizon = {g_top * horizon}; grains born outside "
            "the padded window could reach the observation window",
            "window.padding",
        )

    ev = raw.get("evaluation", {})
    times = tuple(float(t) for t in ev.get("times", []))
    if not times:
        raise ConfigError("at least one evaluation time is required", "evaluation.times")
    for k, t in enumerate(times):
        if not 0 <= t <= horizon:
            raise ConfigError(f"time {t} outside [0, horizon]", f"evaluation.times[{k}]")
    points = tuple(tuple(float(v) for v in p) for p in ev.get("points", [list(window.center)]))
    for k, p in enumerate(points):
        if len(p) != window.d or not window.contains(np.asarray(p)[None, :])[0]:
            raise ConfigError(f"point {p} outside the observation window", f"evaluation.points[{k}]")
    test_box = _box(ev.get("test_box", {"lo": list(window.lo), "hi": list(window.hi)}), "evaluation.test_box")
    if not window.contains_box(test_box):
        raise ConfigError("test box must lie inside the observation window", "evaluation.test_box")
    surface_h = _get(ev, "surface_h", "evaluation", default=h)
    if not surface_h > 0 or not _on_lattice(np.subtract(test_box.hi, test_box.lo), surface_h):
        raise ConfigError("test box extent must be a multiple of surface_h", "evaluation.surface_h")
    sweep = tuple(float(v) for v in ev.get("sweep_radii_h", [3.0, 5.0, 8.0]))
    r_h = _get(ev, "surface_radius_h", "evaluation", default=5.0)
    if min(*sweep, r_h) < 2.0:
        raise ConfigError("Minkowski radii must be at least 2 grid spacings", "evaluation.sweep_radii_h")
    fd_step = _get(ev, "fd_step", "evaluation", default=0.05)
    if not fd_step > 0:
        raise ConfigError("fd_step must be positive", "evaluation.fd_step")
    evo = tuple(float(t) for t in ev.get("evolution_times", []))
    for k, t in enumerate(evo):
        if t - fd_step < 0 or t + fd_step > horizon:
            raise ConfigError(f"central differences at {t} leave [0, horizon]", f"evaluation.evolution_times[{k}]")
    bins = tuple(tuple(float(v) for v in b) for b in ev.get("time_bins", []))
    for k, b in enumerate(bins):
        if len(b) != 2 or not 0 <= b[0] < b[1] <= horizon:
            raise ConfigError("time bins must be [lo, hi] within [0, horizon]", f"evaluation.time_bins[{k}]")
    space_bins = tuple(int(v) for v in ev.get("space_bins", [1] * window.d))
    if len(space_bins) != window.d or min(space_bins) < 1:
        raise ConfigError("space_bins needs one positive count per axis", "evaluation.space_bins")

    tol = dict(DEFAULT_TOLERANCES)
    for k, v in raw.get("tolerances", {}).items():
        if k not in tol:
            raise ConfigError(f"unknown tolerance {k!r}", f"tolerances.{k}")
        tol[k] = _get(raw["tolerances"], k, "tolerances")

    ch = raw.get("checks", {})
    run = tuple(ch.get("run", KNOWN_CHECKS))
    neg = tuple(ch.get("negative_controls", []))
    for k, c in enumerate(run + neg):
        if c not in KNOWN_CHECKS:
            raise ConfigError(f"unknown check {c!r} (known: {', '.join(KNOWN_CHECKS)})", "checks")

    # canonical form: defaults filled in, so the fingerprint pins every effective value
    canon = copy.deepcopy(raw)
    canon.setdefault("window", {})["padding"] = padding
    canon["tolerances"] = tol
    return ExperimentConfig(
        raw=canon,
        name=name,
        seed=seed,
        n=n,
        horizon=horizon,
        workers=workers,
        output=output,
        window=window,
        h=h,
        padding=padding,
        model=model,
        growth=growth,
        times=times,
        points=points,
        test_box=test_box,
        surface_h=surface_h,
        sweep_radii_h=sweep,
        surface_radius_h=r_h,
        fd_step=fd_step,
        evolution_times=evo,
        time_bins=bins,
        space_bins=space_bins,
        tolerances=tol,
        checks=run,
        negative_controls=neg,
        all_negative=all_negative,
        alpha=alpha,
        base_dir=base_dir or Path.cwd(),
    )


def validate(path) -> ExperimentConfig:
    """Load a config, turning any library error into a :class:`ConfigError`."""
    try:
        return load(path)
    except ConfigError:
        raise
    except (BirthGrowthError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
