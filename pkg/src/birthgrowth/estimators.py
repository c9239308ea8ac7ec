"""Monte Carlo estimates of the mean densities and of the capture-time law.

All ensemble reductions go through :func:`survey`, a single pass over the
realisations that accumulates integer node counters.  Integer sums are
exact and order-independent, so serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DomainError
from .grid import Box, Grid, ScalarField
from .growth import _DIST_RTOL
from .simulate import Ensemble, Realization, map_chunks, map_realizations, union_capture_time

QUANTITIES = ("V_V", "V_ex", "S_V", "S_ex")


@dataclass(frozen=True)
class SurveySpec:
    """What one pass over the ensemble records."""

    grid: Grid
    times: tuple[float, ...]
    radii: tuple[float, ...] = ()
    boxes: tuple[Box, ...] = ()
    points: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(sorted(set(float(t) for t in self.times))))
        object.__setattr__(self, "radii", tuple(sorted(set(float(r) for r in self.radii))))
        object.__setattr__(self, "points", tuple(tuple(float(v) for v in p) for p in self.points))
        for r in self.radii:
            if r < 2 * self.grid.h * (1 - 1e-12):
                raise ConfigError(f"Minkowski radius {r} is below 2h = {2 * self.grid.h}", "radii")

    @property
    def margin(self) -> int:
        """Extra nodes per side so dilations near the edge see every grain."""
        return int(math.ceil(max(self.radii) / self.grid.h)) + 1 if self.radii else 0

    def covers(self, grid: Grid, times=(), radii=(), boxes=(), points=()) -> bool:
        return (
            grid == self.grid
            and all(float(t) in self.times for t in times)
            and all(float(r) in self.radii for r in radii)
            and all(b in self.boxes for b in boxes)
            and all(tuple(map(float, p)) in self.points for p in points)
        )


@dataclass
class Survey:
    """Integer node counters plus per-realisation box and point records.

    Fields are indexed ``[time, (radius,) *grid]``; per-realisation arrays
    have a leading realisation axis (saturated realisations are zero rows,
    masked by ``used``).
    """

    spec: SurveySpec
    n_total: int
    used: np.ndarray
    vv: np.ndarray
    vex: np.ndarray
    vex2: np.ndarray
    sv: np.ndarray
    sex: np.ndarray
    sex2: np.ndarray
    box_vv: np.ndarray
    box_vex: np.ndarray
    box_sv: np.ndarray
    box_sex: np.ndarray
    point_capture: np.ndarray
    point_ext: np.ndarray

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.used))

    @property
    def saturated(self) -> int:
        return self.n_total - self.n

    def t_index(self, t: float) -> int:
        return self.spec.times.index(float(t))

    def r_index(self, r: float) -> int:
        return self.spec.radii.index(float(r))


def _shell(inside: np.ndarray, h: float, radii: Sequence[float]) -> list[np.ndarray]:
    """Nodes in ``Theta_r \\ Theta`` for each radius, from one distance transform."""
    if not radii:
        return []
    if not inside.any():
        return [np.zeros_like(inside) for _ in radii]
    dist = ndimage.distance_transform_edt(~inside, sampling=h)
    return [(dist <= r * (1.0 + _DIST_RTOL)) & ~inside for r in radii]


def _survey_one(spec: SurveySpec, real: Realization) -> dict | None:
    if real.saturated:
        return None
    m = spec.margin
    big = spec.grid.expand(m) if m else spec.grid
    crop = spec.grid.interior(m) if m else tuple(slice(None) for _ in spec.grid.shape)
    h = spec.grid.h
    nt, nr, nb = len(spec.times), len(spec.radii), len(spec.boxes)
    t_max = max(spec.times)
    shape = spec.grid.shape
    box_masks = [spec.grid.sub_mask(b) for b in spec.boxes]

    cap = real.capture_field(big, t_max)
    vv = np.zeros((nt, *shape), dtype=np.int64)
    vex = np.zeros((nt, *shape), dtype=np.int64)
    sv = np.zeros((nt, nr, *shape), dtype=np.int64)
    sex = np.zeros((nt, nr, *shape), dtype=np.int64)
    for k, t in enumerate(spec.times):
        union = cap <= t
        vv[k] = union[crop]
        for i, shell in enumerate(_shell(union, h, spec.radii)):
            sv[k, i] = shell[crop]

    # per-grain (extended) counts; shells are computed on the patch padded by the margin
    for j in range(len(real.accepted)):
        patch = real.grain_patch(j, big, t_max)
        if patch is None:
            continue
        sl, c = patch
        if m and nr:
            pad = [(min(m, s.start), min(m, n - s.stop)) for s, n in zip(sl, big.shape)]
            c = np.pad(c, pad, constant_values=np.inf)
            sl = tuple(slice(s.start - a, s.stop + b) for s, (a, b) in zip(sl, pad))
        # intersect the patch with the cropped window
        inner, local = [], []
        for s, cs in zip(sl, crop):
            c0 = 0 if cs.start is None else cs.start
            c1 = s.stop if cs.stop is None else cs.stop
            a, b = max(s.start, c0), min(s.stop, c1)
            if b <= a:
                break
            inner.append(slice(a - c0, b - c0))
            local.append(slice(a - s.start, b - s.start))
        else:
            inner, local = tuple(inner), tuple(local)
            for k, t in enumerate(spec.times):
                grain = c <= t
                if not grain.any():
                    continue
                vex[(k, *inner)] += grain[local]
                for i, shell in enumerate(_shell(grain, h, spec.radii)):
                    sex[(k, i, *inner)] += shell[local]

    out = {
        "vv": vv,
        "vex": vex,
        "sv": sv,
        "sex": sex,
        "box_vv": np.array([[vv[k][bm].sum() for k in range(nt)] for bm in box_masks], dtype=np.int64).reshape(nb, nt),
        "box_vex": np.array([[vex[k][bm].sum() for k in range(nt)] for bm in box_masks], dtype=np.int64).reshape(nb, nt),
        "box_sv": np.array(
            [[[sv[k, i][bm].sum() for i in range(nr)] for k in range(nt)] for bm in box_masks], dtype=np.int64
        ).reshape(nb, nt, nr),
        "box_sex": np.array(
            [[[sex[k, i][bm].sum() for i in range(nr)] for k in range(nt)] for bm in box_masks], dtype=np.int64
        ).reshape(nb, nt, nr),
    }
    pts = np.asarray(spec.points, dtype=float).reshape(-1, spec.grid.d)
    if len(pts):
        out["point_capture"] = np.atleast_1d(union_capture_time(real, pts))
        grains = np.array([real.grain_capture(j, pts) for j in range(len(real.accepted))]).reshape(-1, len(pts))
        out["point_ext"] = np.array([(grains <= t).sum(axis=0) for t in spec.times], dtype=np.int64)
    else:
        out["point_capture"] = np.zeros(0)
        out["point_ext"] = np.zeros((nt, 0), dtype=np.int64)
    return out


def _empty(spec: SurveySpec, rows: int) -> Survey:
    g = spec.grid
    nt, nr, nb, npt = len(spec.times), len(spec.radii), len(spec.boxes), len(spec.points)
    z = lambda *shape: np.zeros(shape, dtype=np.int64)
    return Survey(
        spec,
        rows,
        np.zeros(rows, dtype=bool),
        z(nt, *g.shape),
        z(nt, *g.shape),
        z(nt, *g.shape),
        z(nt, nr, *g.shape),
        z(nt, nr, *g.shape),
        z(nt, nr, *g.shape),
        z(rows, nb, nt),
        z(rows, nb, nt),
        z(rows, nb, nt, nr),
        z(rows, nb, nt, nr),
        np.full((rows, npt), np.nan),
        z(rows, nt, npt),
    )


def _survey_range(spec: SurveySpec, ens: Ensemble, idx: range) -> Survey:
    acc = _empty(spec, len(idx))
    for row, i in enumerate(idx):
        r = _survey_one(spec, ens.realization(i))
        if r is None:
            continue
        acc.used[row] = True
        acc.vv += r["vv"]
        acc.vex += r["vex"]
        acc.vex2 += r["vex"] ** 2
        acc.sv += r["sv"]
        acc.sex += r["sex"]
        acc.sex2 += r["sex"] ** 2
        acc.box_vv[row] = r["box_vv"]
        acc.box_vex[row] = r["box_vex"]
        acc.box_sv[row] = r["box_sv"]
        acc.box_sex[row] = r["box_sex"]
        acc.point_capture[row] = r["point_capture"]
        acc.point_ext[row] = r["point_ext"]
    return acc


def survey(ens: Ensemble, spec: SurveySpec, workers: int | None = None) -> Survey:
    """Accumulate all counters for ``spec`` over the ensemble (cached on ``ens``)."""
    if ens.n == 0:
        raise DomainError("empty ensemble")
    for s in ens._surveys:
        if s.spec == spec:
            return s
    if not spec.times:
        raise DomainError("survey needs at least one evaluation time")
    if max(spec.times) > ens.horizon * (1 + 1e-12):
        raise DomainError("evaluation time beyond the ensemble horizon")
    if min(spec.times) < 0:
        raise DomainError("evaluation times must be >= 0")
    parts = map_chunks(ens, partial(_survey_range, spec), workers)
    acc = _empty(spec, 0)
    acc.n_total = ens.n
    for name in ("vv", "vex", "vex2", "sv", "sex", "sex2"):
        setattr(acc, name, sum(getattr(p, name) for p in parts))
    for name in ("used", "box_vv", "box_vex", "box_sv", "box_sex", "point_capture", "point_ext"):
        setattr(acc, name, np.concatenate([getattr(p, name) for p in parts]))
    if acc.n == 0:
        raise DomainError("every realisation is saturated")
    ens._surveys.append(acc)
    return acc


def _find(ens: Ensemble, grid: Grid | None, **need) -> Survey:
    grid = ens.grid if grid is None else grid
    for s in ens._surveys:
        if s.spec.covers(grid, **need):
            return s
    spec = SurveySpec(
        grid,
        tuple(need.get("times", ())) or (0.0,),
        tuple(need.get("radii", ())),
        tuple(need.get("boxes", ())),
        tuple(need.get("points", ())),
    )
    return survey(ens, spec)


# ---------------------------------------------------------------------------
# density estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityEstimate:
    quantity: str
    t: float
    estimate: ScalarField
    stderr: ScalarField
    n_realizations: int
    r: float | None = None
    saturated: int = 0

    def integral(self, box: Box | None = None) -> float:
        return self.estimate.integral(box)

    def to_csv(self, path, header: dict | None = None) -> None:
        g = self.estimate.grid
        nodes = g.nodes()
        with open(path, "w", newline="") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh)
            w.writerow([*[f"x{k}" for k in range(g.d)], "estimate", "stderr", "n", "t", "quantity", "r"])
            r = "" if self.r is None else repr(self.r)
            for p, e, s in zip(nodes, self.estimate.values.ravel(), self.stderr.values.ravel()):
                w.writerow([*map(repr, p.tolist()), repr(float(e)), repr(float(s)), self.n_realizations, repr(self.t), self.quantity, r])


def _binary_se(p: np.ndarray, n: int) -> np.ndarray:
    return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n)


def _sum_se(s: np.ndarray, s2: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    mean = s / n
    if n < 2:
        return mean, np.zeros_like(mean)
    var = np.clip((s2 - n * mean * mean) / (n - 1), 0.0, None)
    return mean, np.sqrt(var / n)


def estimate_VV(ens: Ensemble, t: float, grid: Grid | None = None) -> DensityEstimate:
    """Fraction of realisations covering each node at time ``t``."""
    s = _find(ens, grid, times=(t,))
    p = s.vv[s.t_index(t)] / s.n
    g = s.spec.grid
    return DensityEstimate("V_V", float(t), ScalarField(g, p), ScalarField(g, _binary_se(p, s.n)), s.n, None, s.saturated)


def estimate_Vex(ens: Ensemble, t: float, grid: Grid | None = None) -> DensityEstimate:
    """Mean number of grains covering each node at time ``t``."""
    s = _find(ens, grid, times=(t,))
    k = s.t_index(t)
    mean, se = _sum_se(s.vex[k].astype(float), s.vex2[k].astype(float), s.n)
    g = s.spec.grid
    return DensityEstimate("V_ex", float(t), ScalarField(g, mean), ScalarField(g, se), s.n, None, s.saturated)


def estimate_SV(ens: Ensemble, t: float, r: float, grid: Grid | None = None) -> DensityEstimate:
    """Mean of ``1{node in Theta_r \\ Theta} / r``."""
    s = _find(ens, grid, times=(t,), radii=(r,))
    p = s.sv[s.t_index(t), s.r_index(r)] / s.n
    g = s.spec.grid
    return DensityEstimate("S_V", float(t), ScalarField(g, p / r), ScalarField(g, _binary_se(p, s.n) / r), s.n, float(r), s.saturated)


def estimate_Sex(ens: Ensemble, t: float, r: float, grid: Grid | None = None) -> DensityEstimate:
    """Like :func:`estimate_SV` with per-grain shells summed before averaging."""
    s = _find(ens, grid, times=(t,), radii=(r,))
    k, i = s.t_index(t), s.r_index(r)
    mean, se = _sum_se(s.sex[k, i].astype(float), s.sex2[k, i].astype(float), s.n)
    g = s.spec.grid
    return DensityEstimate("S_ex", float(t), ScalarField(g, mean / r), ScalarField(g, se / r), s.n, float(r), s.saturated)


def box_integrals(
    ens: Ensemble, quantity: str, t: float, box: Box, r: float | None = None, grid: Grid | None = None
) -> np.ndarray:
    """Per-realisation integral of the quantity's indicator sum over ``box``.

    The mean of the returned vector is the integral of the density estimate
    over ``box``; its spread gives the standard error, and vectors for
    different quantities pair up realisation by realisation.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}")
    surface = quantity in ("S_V", "S_ex")
    if surface and r is None:
        raise ConfigError("surface quantities need a Minkowski radius", "radii")
    need = dict(times=(t,), boxes=(box,))
    if surface:
        need["radii"] = (r,)
    s = _find(ens, grid, **need)
    b, k = s.spec.boxes.index(box), s.t_index(t)
    vol = s.spec.grid.cell_volume
    if quantity == "V_V":
        v = s.box_vv[:, b, k] * vol
    elif quantity == "V_ex":
        v = s.box_vex[:, b, k] * vol
    elif quantity == "S_V":
        v = s.box_sv[:, b, k, s.r_index(r)] * vol / r
    else:
        v = s.box_sex[:, b, k, s.r_index(r)] * vol / r
    return v[s.used].astype(float)


def mean_se(values: np.ndarray) -> tuple[float, float]:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------------------
# capture times
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaptureTimeSample:
    x: tuple[float, ...]
    times: np.ndarray
    censored: int
    n_realizations: int
    horizon: float

    def __post_init__(self):
        t = np.sort(np.asarray(self.times, dtype=float))
        t.flags.writeable = False
        object.__setattr__(self, "times", t)
        if self.censored + t.size != self.n_realizations:
            raise ValueError("censored + finite count must equal the number of realisations")

    def cdf(self, t) -> np.ndarray:
        """Empirical ``P(T(x) <= t)`` (censored draws count as not yet captured)."""
        return np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") / self.n_realizations

    def ks_distance(self, cdf) -> float:
        """Sup distance between the empirical CDF and ``cdf`` on ``[0, horizon]``."""
        n = self.n_realizations
        t = self.times
        if t.size == 0:
            return float(cdf(self.horizon))
        f = np.asarray(cdf(t), dtype=float)
        i = np.arange(1, t.size + 1)
        d = max(np.max(i / n - f), np.max(f - (i - 1) / n))
        # the empirical CDF stays flat at (n - censored)/n up to the horizon
        d = max(d, abs(float(cdf(self.horizon)) - t.size / n))
        return float(d)

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """Density histogram with Freedman-Diaconis bin width (descriptive only)."""
        t = self.times
        if t.size < 2:
            return np.zeros(0), np.asarray([0.0, self.horizon])
        q75, q25 = np.percentile(t, [75, 25])
        width = (q75 - q25) * t.size ** (-1.0 / 3.0)
        if width <= 0:
            width = max(t[-1] - t[0], 1e-12)
        nbins = max(1, int(math.ceil((t[-1] - t[0]) / width)))
        counts, edges = np.histogram(t, bins=nbins, range=(t[0], t[0] + nbins * width))
        return counts / (self.n_realizations * width), edges

    def to_csv(self, path, header: dict | None = None) -> Path:
        """Sorted finite capture times plus a JSON sidecar with censoring metadata."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}: {v}\n")
            fh.write("capture_time\n")
            for v in self.times:
                fh.write(f"{float(v)!r}\n")
        side = path.with_suffix(".json")
        meta = {
            "x": list(self.x),
            "n_realizations": self.n_realizations,
            "finite": int(self.times.size),
            "censored": self.censored,
            "censoring_time": self.horizon,
            **(header or {}),
        }
        side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return side


def _capture_at(x, real: Realization):
    if real.saturated:
        return None
    return union_capture_time(real, np.asarray(x, dtype=float))


def sample_capture_time(ens: Ensemble, x) -> CaptureTimeSample:
    """Exact union capture times at ``x`` across the ensemble, censored at the horizon."""
    if ens.n == 0:
        raise DomainError("empty ensemble")
    key = tuple(float(v) for v in x)
    for s in ens._surveys:
        if key in s.spec.points:
            vals = s.point_capture[s.used, s.spec.points.index(key)]
            break
    else:
        raw = map_realizations(ens, partial(_capture_at, key))
        vals = np.array([v for v in raw if v is not None], dtype=float)
    finite = vals[np.isfinite(vals)]
    return CaptureTimeSample(key, finite, int(vals.size - finite.size), int(vals.size), ens.horizon)


@dataclass(frozen=True)
class AtomReport:
    max_repeat_fraction: float
    max_cdf_jump: float
    threshold: float
    n_finite: int
    inconclusive: bool
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


MIN_ATOM_SAMPLES = 100


def atom_test(sample: CaptureTimeSample) -> AtomReport:
    """Flag atoms in the capture-time law through exact ties among finite times."""
    t = sample.times
    n = sample.n_realizations
    thr = max(2.0 / n, 1e-3) if n else 1e-3
    if t.size < MIN_ATOM_SAMPLES:
        return AtomReport(math.nan, math.nan, thr, int(t.size), True, False)
    _, counts = np.unique(t, return_counts=True)
    top = int(counts.max())
    frac = top / n if top > 1 else 0.0
    return AtomReport(frac, top / n, thr, int(t.size), False, frac <= thr)
