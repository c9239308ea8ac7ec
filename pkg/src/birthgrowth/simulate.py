"""Realisations of the birth-and-growth process.

A :class:`Realization` stores the accepted nuclei (and, for thinning, the
rejected ones) and derives everything else from capture times: the union
``Theta^t`` is ``{x : T(x) <= t}`` with ``T(x) = min_j T_j(x)``.
"""

from __future__ import annotations

import csv
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nucleation
from .errors import ConfigError, DomainError
from .families import ConstantSpeed
from .growth import ArrivalField, GrowthField, dilate_mask
from .grid import Box, Grid, ScalarField
from .nucleation import MarkedPoint, NucleationModel
from .rng import stream

FREE_SPACE_MAX_ATTEMPTS = 10**6


def _distance(points: np.ndarray, y: np.ndarray) -> np.ndarray:
    # coordinate-wise accumulation so grid patches and single points round identically
    acc = (points[..., 0] - y[0]) ** 2
    for k in range(1, y.size):
        acc = acc + (points[..., k] - y[k]) ** 2
    return np.sqrt(acc)


def _capture_from_distance(growth: GrowthField, birth: float, dist: np.ndarray) -> np.ndarray:
    if isinstance(growth.time_speed, ConstantSpeed):
        return birth + dist / float(growth.time_speed.value)
    return growth.inverse_primitive(growth.primitive(birth) + dist)


@dataclass
class Realization:
    accepted: list[MarkedPoint]
    growth: GrowthField
    horizon: float
    seed: int
    index: int = 0
    rejected: list[MarkedPoint] = field(default_factory=list)
    kind: str = "poisson"
    saturated: bool = False
    attempts: int = 0
    _arrivals: dict = field(default_factory=dict, repr=False, compare=False)
    _captures: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def d(self) -> int:
        if self.growth.kind == "space_only":
            return self.growth.grid.d
        return len(self.accepted[0].location) if self.accepted else 0

    def arrival(self, j: int) -> ArrivalField:
        """Travel-time field of accepted grain ``j`` (space-only growth), cached."""
        if j not in self._arrivals:
            p = self.accepted[j]
            self._arrivals[j] = ArrivalField(self.growth, p.location, self.horizon - p.birth_time)
        return self._arrivals[j]

    def grain_capture(self, j: int, points) -> np.ndarray:
        """Capture times of accepted grain ``j`` at ``points`` (any leading shape)."""
        pts = np.asarray(points, dtype=float)
        p = self.accepted[j]
        if self.growth.kind == "time_only":
            return _capture_from_distance(self.growth, p.birth_time, _distance(pts, np.asarray(p.location)))
        flat = pts.reshape(-1, pts.shape[-1])
        return (p.birth_time + self.arrival(j).at(flat)).reshape(pts.shape[:-1])

    def grain_patch(self, j: int, grid: Grid, t_max: float):
        """``(slices, capture times)`` over the nodes grain ``j`` can reach by ``t_max``."""
        p = self.accepted[j]
        if p.birth_time > t_max:
            return None
        if self.growth.kind == "time_only":
            reach = float(self.growth.primitive(t_max) - self.growth.primitive(p.birth_time))
        else:
            reach = self.growth.G0 * (t_max - p.birth_time) + 2.0 * self.growth.grid.h
        sl = grid.window(p.location, reach)
        if sl is None:
            return None
        axes = grid.axes_at(sl)
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return sl, self.grain_capture(j, pts)

    def capture_field(self, grid: Grid, t_max: float | None = None) -> np.ndarray:
        """Union capture times on ``grid`` (``inf`` where not covered by ``t_max``); cached."""
        t_max = self.horizon if t_max is None else min(float(t_max), self.horizon)
        key = (grid, t_max)
        if key not in self._captures:
            cap = np.full(grid.shape, np.inf)
            for j in range(len(self.accepted)):
                patch = self.grain_patch(j, grid, t_max)
                if patch is not None:
                    sl, c = patch
                    np.minimum(cap[sl], c, out=cap[sl])
            cap[cap > t_max] = np.inf
            cap.flags.writeable = False
            self._captures[key] = cap
        return self._captures[key]

    def drop_caches(self) -> None:
        self._arrivals.clear()
        self._captures.clear()

    def to_csv(self, path) -> None:
        """Accepted and rejected nuclei, one row each."""
        d = len(self.accepted[0].location) if self.accepted else (
            len(self.rejected[0].location) if self.rejected else 0
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["status", "grain_id", "birth_time", *[f"x{k}" for k in range(d)]])
            for status, pts in (("accepted", self.accepted), ("rejected", self.rejected)):
                for p in pts:
                    w.writerow([status, p.grain_id, repr(float(p.birth_time)), *(repr(float(v)) for v in p.location)])


def _renumber(points: Sequence[MarkedPoint]) -> list[MarkedPoint]:
    return [MarkedPoint(p.birth_time, p.location, j) for j, p in enumerate(points)]


def _earlier_capture(real: Realization, points: np.ndarray) -> np.ndarray:
    """Capture times of ``points`` by the grains accepted so far."""
    out = np.full(len(points), np.inf)
    for j in range(len(real.accepted)):
        np.minimum(out, real.grain_capture(j, points), out=out)
    return out


def _check_horizon(growth: GrowthField, horizon: float):
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    if growth.kind == "time_only" and growth.t_max < horizon * (1 - 1e-12):
        raise ConfigError(f"growth table horizon {growth.t_max} is shorter than {horizon}", "growth")


def realize(model: NucleationModel, growth: GrowthField, horizon: float, seed: int, index: int = 0) -> Realization:
    """One realisation on ``[0, horizon]``, drawn from the stream ``(seed, index)``."""
    _check_horizon(growth, horizon)
    rng = stream(seed, index)
    if not model.history_dependent:
        pts = nucleation.sample(model, horizon, rng)
        return Realization(pts, growth, horizon, seed, index, kind=model.kind)
    base = nucleation.sample(model.base, horizon, rng)
    real = Realization([], growth, horizon, seed, index, kind=model.kind)
    if model.kind == "thinned":
        thin(real, base)
        return real
    _free_space(real, model.region, base, rng)
    return real


def thin(real: Realization, base: Sequence[MarkedPoint]) -> Realization:
    """Append ``base`` (in birth order) to ``real``, rejecting nuclei born on covered ground."""
    rejected = []
    for p in sorted(base, key=lambda q: q.birth_time):
        x = np.asarray(p.location, dtype=float)[None, :]
        # covered at T_j- means captured strictly before T_j
        if _earlier_capture(real, x)[0] < p.birth_time:
            rejected.append(p)
        else:
            real.accepted.append(MarkedPoint(p.birth_time, p.location, len(real.accepted)))
    real.rejected = _renumber([*real.rejected, *rejected])
    return real


def _free_space(real: Realization, region: Box, base: list[MarkedPoint], rng: np.random.Generator):
    """At each base birth time, place the nucleus uniformly on the uncovered part of ``region``."""
    for p in base:
        batch = 16
        placed = None
        tried = 0
        while tried < FREE_SPACE_MAX_ATTEMPTS:
            m = min(batch, FREE_SPACE_MAX_ATTEMPTS - tried)
            cand = region.uniform(rng, m)
            free = np.flatnonzero(_earlier_capture(real, cand) >= p.birth_time)
            if free.size:
                placed = cand[free[0]]
                tried += int(free[0]) + 1
                break
            tried += m
            batch = min(batch * 4, 1 << 16)
        real.attempts += tried
        if placed is None:
            real.saturated = True
            return
        real.accepted.append(MarkedPoint(p.birth_time, tuple(float(v) for v in placed), len(real.accepted)))


def union_capture_time(real: Realization, x) -> np.ndarray | float:
    """``T(x) = min_j T_j(x)``; ``inf`` when no grain gets there by the horizon."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = _earlier_capture(real, pts)
    out[out > real.horizon] = np.inf
    return float(out[0]) if single else out


def union_indicator(real: Realization, t: float, grid: Grid) -> ScalarField:
    if not 0 <= t <= real.horizon:
        raise DomainError("t must lie in [0, horizon]")
    return ScalarField(grid, (real.capture_field(grid) <= t).astype(float))


def minkowski_surface_mass(indicator: ScalarField, r: float, box: Box | None = None) -> float:
    """``|(Theta_r \\ Theta) cap A| / r`` from node counts."""
    g = indicator.grid
    if r < 2 * g.h * (1 - 1e-12):
        raise ConfigError(
            f"Minkowski radius {r} is below 2h = {2 * g.h}; refine the grid or use r >= 2h", "radii"
        )
    inside = indicator.support()
    shell = dilate_mask(inside, g.h, r) & ~inside
    if box is not None:
        shell &= g.sub_mask(box)
    return float(np.count_nonzero(shell)) * g.cell_volume / r


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass
class Ensemble:
    """``n`` independent realisations; realisation ``i`` depends only on ``(seed, i)``."""

    model: NucleationModel
    growth: GrowthField
    horizon: float
    seed: int
    n: int
    grid: Grid
    fingerprint: str = ""
    workers: int = 1
    _surveys: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise ConfigError("ensemble size must be >= 0", "ensemble.n")
        _check_horizon(self.growth, self.horizon)

    def __len__(self) -> int:
        return self.n

    def realization(self, i: int) -> Realization:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return realize(self.model, self.growth, self.horizon, self.seed, i)

    __getitem__ = realization

    def __iter__(self):
        return (self.realization(i) for i in range(self.n))


def _chunks(n: int, workers: int) -> list[range]:
    k = max(1, min(workers * 4, n))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [range(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_chunk(ens: Ensemble, func: Callable, idx: range):
    return [func(ens.realization(i)) for i in idx]


def map_chunks(ens: Ensemble, func: Callable, workers: int | None = None) -> list:
    """``[func(ens, chunk) for chunk in index chunks]``, optionally across processes.

    Results come back in chunk order, so reductions done afterwards do not
    depend on the worker count.
    """
    workers = ens.workers if workers is None else workers
    workers = max(1, min(int(workers), max(ens.n, 1)))
    if workers == 1 or ens.n < 2:
        return [func(ens, range(ens.n))]
    chunks = _chunks(ens.n, workers)
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(func, [ens] * len(chunks), chunks))


def map_realizations(ens: Ensemble, func: Callable, workers: int | None = None) -> list:
    """``[func(realization(i)) for i in range(n)]`` in index order."""
    parts = map_chunks(ens, partial(_apply, func), workers)
    return [r for part in parts for r in part]


def _apply(func: Callable, ens: Ensemble, idx: range) -> list:
    return [func(ens.realization(i)) for i in idx]


def dump_realization(real: Realization, out_dir, grid: Grid, times: Sequence[float] = ()) -> list[Path]:
    """Write the nuclei CSV, the capture-time grid and union indicators at ``times``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"realization_{real.index:06d}"
    paths = [out / f"{stem}_nuclei.csv", out / f"{stem}_capture.bgsf"]
    real.to_csv(paths[0])
    ScalarField(grid, real.capture_field(grid)).to_binary(paths[1])
    for t in times:
        p = out / f"{stem}_union_t{t:g}.bgsf"
        union_indicator(real, t, grid).to_binary(p)
        paths.append(p)
    return paths
