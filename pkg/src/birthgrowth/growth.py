"""Normal growth of grains for speed fields G(t) or G(x).

Growth is encoded entirely through capture times: for ``G = G(t)`` a grain
born at ``(s, y)`` is the ball of radius ``R(s, t) = P(t) - P(s)`` with
``P`` the primitive of G; for ``G = G(x)`` the grain at time ``t`` is the
sub-level set ``{x : tau(y, x) <= t - s}`` of the eikonal travel time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import eikonal
from .errors import ConfigError, DomainError
from .families import PiecewiseLinear, TimeSpeed
from .grid import Grid, ScalarField
from .nucleation import MarkedPoint

# primitive of G(t) is tabulated at this fraction of the table horizon
PRIMITIVE_STEP = 1e-4
# relative slack when comparing lattice distances against a radius
_DIST_RTOL = 1e-9


@dataclass(frozen=True)
class GrowthField:
    """Speed field of the normal growth model.

    Build with :meth:`time_only` or :meth:`space_only`.
    """

    kind: str
    g0: float
    G0: float
    t_max: float = np.inf
    time_speed: TimeSpeed | None = None
    speed: ScalarField | None = None
    init_radius: float | None = None
    _table: PiecewiseLinear | None = field(default=None, repr=False, compare=False)

    @classmethod
    def time_only(cls, speed: TimeSpeed, t_max: float) -> "GrowthField":
        if not t_max > 0:
            raise ConfigError("growth table horizon must be positive", "growth")
        n = int(round(1.0 / PRIMITIVE_STEP))
        knots = np.union1d(np.linspace(0.0, t_max, n + 1), [b for b in speed.breakpoints() if 0 < b < t_max])
        g = np.asarray(speed(knots), dtype=float)
        # isolated zeros (e.g. G(t) = t at t = 0) keep the primitive strictly increasing
        if not np.all(np.isfinite(g)) or np.any(g < 0) or np.any((g[1:] == 0) & (g[:-1] == 0)):
            raise ConfigError("speed must be finite and positive on [0, t_max] up to isolated zeros", "growth.speed")
        table = PiecewiseLinear(tuple(knots), tuple(g))
        return cls("time_only", float(g.min()), float(g.max()), float(t_max), time_speed=speed, _table=table)

    @classmethod
    def space_only(
        cls, speed: ScalarField, g0: float | None = None, G0: float | None = None, init_radius: float | None = None
    ) -> "GrowthField":
        v = speed.values
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ConfigError("speed grid must be finite and strictly positive", "growth.speed")
        lo, hi = float(v.min()), float(v.max())
        g0 = lo if g0 is None else float(g0)
        G0 = hi if G0 is None else float(G0)
        if lo < g0 or hi > G0:
            raise ConfigError(f"speed values [{lo}, {hi}] violate bounds [{g0}, {G0}]", "growth.speed")
        return cls("space_only", g0, G0, speed=speed, init_radius=init_radius)

    # time-only helpers ----------------------------------------------------

    def primitive(self, t):
        """``P(t) = int_0^t G``; piecewise quadratic between table knots."""
        self._need("time_only")
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t_max * (1 + 1e-12)):
            raise DomainError(f"time beyond growth table horizon {self.t_max}")
        return self._table.cumulative(t)

    def inverse_primitive(self, p):
        """Time at which the primitive reaches ``p``; ``inf`` beyond the table."""
        self._need("time_only")
        p = np.asarray(p, dtype=float)
        top = self._table._cum[-1]
        with np.errstate(invalid="ignore"):
            t = self._table.inverse_cumulative(np.minimum(p, top))
        return np.where(p > top * (1 + 1e-12), np.inf, t)

    def speed_at_time(self, t):
        self._need("time_only")
        return self._table.density(np.asarray(t, dtype=float))

    # space-only helpers ---------------------------------------------------

    @property
    def grid(self) -> Grid:
        self._need("space_only")
        return self.speed.grid

    def speed_at(self, points) -> np.ndarray:
        self._need("space_only")
        return self.grid.interpolate(self.speed.values, points, fill=np.nan)

    def _need(self, kind):
        if self.kind != kind:
            raise DomainError(f"operation requires a {kind} growth field, got {self.kind}")


class ArrivalField:
    """Travel times ``tau(source, .)`` on the speed lattice."""

    def __init__(self, growth: GrowthField, source, t_stop: float = np.inf):
        grid = growth.grid
        src = np.asarray(source, dtype=float)
        if not grid.box.contains(src)[0]:
            raise DomainError(f"source {src} outside the speed window")
        self.growth = growth
        self.source = src
        h = grid.h
        r0 = growth.init_radius
        self.near = max(eikonal.INIT_RADIUS * h, r0 or 0.0)
        tau = eikonal.travel_times(
            growth.speed.values, grid.axes(), h, src, t_stop, init_radius=r0
        )
        self.field = ScalarField(grid, tau)

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def source_mask(self) -> np.ndarray:
        """Nodes initialised by the straight-ray rule."""
        g = self.field.grid
        dist = np.linalg.norm(g.nodes() - self.source, axis=-1).reshape(g.shape)
        return dist <= self.near + 1e-12

    def at(self, points) -> np.ndarray:
        """Travel time at arbitrary points; exact straight ray next to the source."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tau = self.field.grid.interpolate(self.field.values, pts)
        dist = np.linalg.norm(pts - self.source, axis=-1)
        close = dist <= self.near
        if np.any(close):
            g = self.field.grid
            idx = np.rint(g.fractional_index(pts[close])).astype(int)
            for k, n in enumerate(g.shape):
                idx[:, k] = np.clip(idx[:, k], 0, n - 1)
            tau[close] = dist[close] / self.growth.speed.values[tuple(idx.T)]
        return tau


def radius(field: GrowthField, s, t):
    """Radius at time ``t`` of a grain born at ``s`` under ``G = G(t)``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s > t):
        raise DomainError("birth time after evaluation time")
    if np.any(s < 0):
        raise DomainError("negative birth time")
    r = field.primitive(t) - field.primitive(s)
    return np.maximum(r, 0.0)


def arrival_field(field: GrowthField, source, t_stop: float = np.inf) -> ArrivalField:
    """Eikonal travel-time field from ``source`` under ``G = G(x)``."""
    return ArrivalField(field, source, t_stop)


def grain_capture_time(field: GrowthField, nucleus: MarkedPoint, x, arrival: ArrivalField | None = None):
    """First time the grain of ``nucleus`` covers ``x`` (vectorised over points).

    ``inf`` when the front does not get there within the tabulated horizon.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(nucleus.location, dtype=float)
    T = float(nucleus.birth_time)
    if field.kind == "time_only":
        dist = np.linalg.norm(pts - y, axis=-1)
        if T > field.t_max:
            return np.full(dist.shape, np.inf)
        return field.inverse_primitive(field.primitive(T) + dist)
    if arrival is None:
        arrival = arrival_field(field, y)
    return T + arrival.at(pts)


def grain_capture_field(field: GrowthField, nucleus: MarkedPoint, grid: Grid, arrival=None) -> np.ndarray:
    """Capture times of ``nucleus``'s grain at every node of ``grid``."""
    return grain_capture_time(field, nucleus, grid.nodes(), arrival).reshape(grid.shape)


def grain_indicator(field: GrowthField, nucleus: MarkedPoint, t: float, grid: Grid, arrival=None) -> ScalarField:
    """0/1 field of the grain at time ``t``; empty before the birth."""
    if t < 0:
        raise DomainError("t must be >= 0")
    if t < nucleus.birth_time:
        return ScalarField.zeros(grid)
    cap = grain_capture_field(field, nucleus, grid, arrival)
    return ScalarField(grid, (cap <= t).astype(float))


def dilate_mask(mask: np.ndarray, h: float, r: float) -> np.ndarray:
    """Nodes within Euclidean distance ``r`` of a node of ``mask``."""
    if r < 0:
        raise DomainError("dilation radius must be >= 0")
    if not mask.any():
        return np.zeros_like(mask, dtype=bool)
    dist = ndimage.distance_transform_edt(~mask, sampling=h)
    return dist <= r * (1.0 + _DIST_RTOL) + 1e-300


def dilate(indicator: ScalarField, r: float) -> ScalarField:
    """Closed r-neighbourhood of the indicator's support, on the same lattice."""
    out = dilate_mask(indicator.support(), indicator.grid.h, r)
    return ScalarField(indicator.grid, out.astype(float))
