"""Named parametric families for birth-time laws, mark densities and speeds.

Every family can be rebuilt from ``{"family": name, **params}`` via
:func:`temporal_from_spec`, :func:`marks_from_spec` or :func:`speed_from_spec`,
which is how experiment config files refer to them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import geometry
from .errors import ConfigError
from .grid import Box


# ---------------------------------------------------------------------------
# temporal laws: lambda(t) for Poisson kinds, birth-time density f otherwise
# ---------------------------------------------------------------------------


class TemporalLaw:
    name = "abstract"
    absolutely_continuous = True
    is_probability = False

    def density(self, t):
        raise NotImplementedError

    def cumulative(self, t):
        """Integral of the density over [0, t]."""
        raise NotImplementedError

    def breakpoints(self, t_max: float) -> list[float]:
        return []

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise ConfigError(f"{self.name} law is not a probability density")

    def params(self) -> dict:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"family": self.name, **self.params()}


@dataclass(frozen=True)
class Constant(TemporalLaw):
    value: float
    name = "constant"

    def __post_init__(self):
        if self.value < 0:
            raise ConfigError("constant rate must be nonnegative")

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.value, 0.0)

    def cumulative(self, t):
        return self.value * np.maximum(np.asarray(t, dtype=float), 0.0)

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class Exponential(TemporalLaw):
    """``scale * rate * exp(-rate t)``; a probability density when scale is 1."""

    rate: float
    scale: float = 1.0
    name = "exponential"

    def __post_init__(self):
        if self.rate <= 0 or self.scale < 0:
            raise ConfigError("exponential law needs rate > 0 and scale >= 0")

    @property
    def is_probability(self):
        return self.scale == 1.0

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.scale * self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)

    def cumulative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self.scale * -np.expm1(-self.rate * t)

    def sample(self, rng, size):
        if not self.is_probability:
            return super().sample(rng, size)
        return rng.exponential(1.0 / self.rate, size=size)

    def params(self):
        return {"rate": self.rate, "scale": self.scale}


@dataclass(frozen=True)
class Uniform(TemporalLaw):
    lo: float
    hi: float
    name = "uniform"
    is_probability = True

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise ConfigError("uniform law needs 0 <= lo < hi")

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.lo) & (t <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def breakpoints(self, t_max):
        return [self.lo, self.hi]

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size=size)

    def params(self):
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PiecewiseLinear(TemporalLaw):
    """Linear interpolation through ``(knots, values)``; zero outside the knots."""

    knots: tuple[float, ...]
    values: tuple[float, ...]
    name = "piecewise_linear"
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _k: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.size < 2 or k.size != v.size:
            raise ConfigError("piecewise_linear needs matching knots/values of length >= 2")
        if k[0] < 0 or np.any(np.diff(k) <= 0) or np.any(v < 0):
            raise ConfigError("piecewise_linear knots must increase from >= 0, values >= 0")
        object.__setattr__(self, "knots", tuple(k))
        object.__setattr__(self, "values", tuple(v))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(k))])
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_k", k)
        object.__setattr__(self, "_v", v)

    @property
    def is_probability(self):
        return abs(self._cum[-1] - 1.0) <= 1e-9

    def density(self, t):
        t = np.asarray(t, dtype=float)
        k = self._k
        return np.where((t >= k[0]) & (t <= k[-1]), np.interp(t, k, self._v), 0.0)

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        k, v = self._k, self._v
        tc = np.clip(t, k[0], k[-1])
        i = np.clip(np.searchsorted(k, tc, side="right") - 1, 0, k.size - 2)
        dt = tc - k[i]
        slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
        return self._cum[i] + v[i] * dt + 0.5 * slope * dt * dt

    def breakpoints(self, t_max):
        return list(self.knots)

    def sample(self, rng, size):
        if not self.is_probability:
            return super().sample(rng, size)
        return self.inverse_cumulative(rng.uniform(0.0, 1.0, size=size))

    def inverse_cumulative(self, c):
        c = np.asarray(c, dtype=float)
        k, v = self._k, self._v
        i = np.clip(np.searchsorted(self._cum, c, side="right") - 1, 0, k.size - 2)
        slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
        rem = c - self._cum[i]
        # solve v_i dt + slope dt^2 / 2 = rem on the segment
        disc = np.maximum(v[i] ** 2 + 2.0 * slope * rem, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(np.abs(slope) > 1e-300, 2.0 * rem / (v[i] + np.sqrt(disc)), rem / v[i])
        return k[i] + np.clip(np.nan_to_num(dt), 0.0, k[i + 1] - k[i])

    def params(self):
        return {"knots": list(self.knots), "values": list(self.values)}


@dataclass(frozen=True)
class Deterministic(TemporalLaw):
    """Point mass at ``at``; not absolutely continuous (negative controls only)."""

    at: float
    name = "deterministic"
    absolutely_continuous = False
    is_probability = True

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t == self.at, np.inf, 0.0)

    def cumulative(self, t):
        return np.where(np.asarray(t, dtype=float) >= self.at, 1.0, 0.0)

    def breakpoints(self, t_max):
        return [self.at]

    def sample(self, rng, size):
        return np.full(size, float(self.at))

    def params(self):
        return {"at": self.at}


_TEMPORAL = {
    "constant": lambda p: Constant(float(p["value"])),
    "exponential": lambda p: Exponential(float(p["rate"]), float(p.get("scale", 1.0))),
    "uniform": lambda p: Uniform(float(p["lo"]), float(p["hi"])),
    "piecewise_linear": lambda p: PiecewiseLinear(tuple(p["knots"]), tuple(p["values"])),
    "deterministic": lambda p: Deterministic(float(p["at"])),
}


def temporal_from_spec(spec: dict, path: str = "temporal") -> TemporalLaw:
    return _build(_TEMPORAL, spec, path)


# ---------------------------------------------------------------------------
# mark densities q(t, .) on R^d; all shipped families are time-independent
# ---------------------------------------------------------------------------


class MarkLaw:
    name = "abstract"
    absolutely_continuous = True

    def bind(self, window: Box) -> "MarkLaw":
        """Restrict to ``window`` and renormalise there."""
        return self

    def pdf(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def ball_mass(self, center, R: float) -> float:
        return geometry.ball_integral(self.pdf, center, R)

    def sphere_mass(self, center, R: float) -> float:
        return geometry.sphere_integral(self.pdf, center, R)

    def critical_radii(self, center) -> list[float]:
        """Radii where ball and sphere masses about ``center`` stop being smooth."""
        box = getattr(self, "box", None)
        return _box_radii(center, box) if box is not None else []

    def params(self) -> dict:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"family": self.name, **self.params()}


def _box_radii(center, box: Box) -> list[float]:
    # the sphere touches a face or passes a corner of the support box
    c = np.asarray(center, dtype=float)
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    faces = np.concatenate([np.abs(c - lo), np.abs(hi - c)])
    corners = [float(np.linalg.norm(c - np.where(m, hi, lo))) for m in itertools.product((0, 1), repeat=c.size)]
    return sorted({float(r) for r in [*faces, *corners] if r > 0})


@dataclass(frozen=True)
class UniformBox(MarkLaw):
    """Uniform density on ``box`` (the nucleation window when unset)."""

    box: Box | None = None
    name = "uniform_box"

    def bind(self, window):
        if self.box is None:
            return UniformBox(window)
        lo = np.maximum(self.box.lo, window.lo)
        hi = np.minimum(self.box.hi, window.hi)
        if np.any(hi <= lo):
            raise ConfigError("uniform_box does not intersect the nucleation window")
        return UniformBox(Box(tuple(lo), tuple(hi)))

    @property
    def density_value(self) -> float:
        return 1.0 / self.box.volume

    def pdf(self, points):
        return np.where(self.box.contains(points), self.density_value, 0.0)

    def sample(self, rng, size):
        return self.box.uniform(rng, size)

    def ball_mass(self, center, R):
        if len(self.box.lo) == 2:
            return self.density_value * geometry.disc_rect_area(center, R, self.box.lo, self.box.hi)
        return super().ball_mass(center, R)

    def sphere_mass(self, center, R):
        if len(self.box.lo) == 2:
            return self.density_value * geometry.circle_rect_length(center, R, self.box.lo, self.box.hi)
        return super().sphere_mass(center, R)

    def params(self):
        if self.box is None:
            return {}
        return {"lo": list(self.box.lo), "hi": list(self.box.hi)}


@dataclass(frozen=True)
class TruncatedGaussian(MarkLaw):
    """Isotropic Gaussian truncated to (and renormalised on) the window."""

    mean: tuple[float, ...]
    sigma: float
    box: Box | None = None
    name = "gaussian_truncated"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("gaussian_truncated needs sigma > 0")
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))

    def bind(self, window):
        if len(self.mean) != window.d:
            raise ConfigError("gaussian mean has wrong dimension")
        return TruncatedGaussian(self.mean, self.sigma, window)

    def _bounds(self):
        m = np.asarray(self.mean)
        return (np.asarray(self.box.lo) - m) / self.sigma, (np.asarray(self.box.hi) - m) / self.sigma

    def pdf(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self._bounds()
        z = (p - np.asarray(self.mean)) / self.sigma
        norm = np.prod((special.ndtr(b) - special.ndtr(a)) * self.sigma)
        val = np.exp(-0.5 * np.sum(z * z, axis=-1)) / (2.0 * math.pi) ** (p.shape[-1] / 2) / norm
        return np.where(self.box.contains(p), val, 0.0)

    def sample(self, rng, size):
        a, b = self._bounds()
        u = rng.uniform(size=(size, len(self.mean)))
        z = stats.truncnorm.ppf(u, a, b)
        return np.asarray(self.mean) + self.sigma * z

    def params(self):
        return {"mean": list(self.mean), "sigma": self.sigma}


@dataclass(frozen=True)
class PointMark(MarkLaw):
    """All nuclei at one location; singular (negative controls only)."""

    location: tuple[float, ...]
    name = "point"
    absolutely_continuous = False

    def pdf(self, points):
        raise ConfigError("point marks have no density")

    def sample(self, rng, size):
        return np.tile(np.asarray(self.location, dtype=float), (size, 1))

    def ball_mass(self, center, R):
        return float(np.linalg.norm(np.asarray(center) - self.location) <= R)

    def sphere_mass(self, center, R):
        raise ConfigError("point marks have no surface density")

    def params(self):
        return {"location": list(self.location)}


_MARKS = {
    "uniform_box": lambda p: UniformBox(Box(tuple(p["lo"]), tuple(p["hi"])) if "lo" in p else None),
    "gaussian_truncated": lambda p: TruncatedGaussian(tuple(p["mean"]), float(p["sigma"])),
    "point": lambda p: PointMark(tuple(float(v) for v in p["location"])),
}


def marks_from_spec(spec: dict, path: str = "marks") -> MarkLaw:
    return _build(_MARKS, spec, path)


# ---------------------------------------------------------------------------
# speed laws G(t) for time-only growth, G(x) for space-only growth
# ---------------------------------------------------------------------------


class TimeSpeed:
    name = "abstract"

    def __call__(self, t):
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        return []

    def params(self) -> dict:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"family": self.name, **self.params()}


@dataclass(frozen=True)
class ConstantSpeed(TimeSpeed):
    value: float
    name = "constant"

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value))

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class LinearSpeed(TimeSpeed):
    """``G(t) = a + b t``."""

    a: float
    b: float
    name = "linear"

    def __call__(self, t):
        return self.a + self.b * np.asarray(t, dtype=float)

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class TableSpeed(TimeSpeed):
    """Piecewise-linear G(t) through ``(times, values)``, held constant outside."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    name = "table"

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.times, self.values)

    def breakpoints(self):
        return list(self.times)

    def params(self):
        return {"times": list(self.times), "values": list(self.values)}


_TIME_SPEEDS = {
    "constant": lambda p: ConstantSpeed(float(p["value"])),
    "linear": lambda p: LinearSpeed(float(p["a"]), float(p["b"])),
    "table": lambda p: TableSpeed(tuple(map(float, p["times"])), tuple(map(float, p["values"]))),
}


def time_speed_from_spec(spec: dict, path: str = "growth.speed") -> TimeSpeed:
    return _build(_TIME_SPEEDS, spec, path)


def space_speed_values(spec: dict, mesh: list[np.ndarray], path: str = "growth.speed") -> np.ndarray:
    """Sample a named G(x) family (or inline grid) on lattice coordinates."""
    fam = spec.get("family")
    shape = mesh[0].shape
    try:
        if fam == "constant":
            return np.full(shape, float(spec["value"]))
        if fam == "two_halfspace":
            axis = int(spec.get("axis", 0))
            return np.where(mesh[axis] < float(spec["interface"]), float(spec["left"]), float(spec["right"]))
        if fam == "gaussian_bump":
            c = np.asarray(spec["center"], dtype=float)
            r2 = sum((m - ck) ** 2 for m, ck in zip(mesh, c))
            return float(spec["base"]) + float(spec["amplitude"]) * np.exp(-0.5 * r2 / float(spec["width"]) ** 2)
        if fam == "inline":
            vals = np.asarray(spec["values"], dtype=float)
            if vals.shape != shape:
                raise ConfigError(f"inline speed grid has shape {vals.shape}, expected {shape}", path)
            return vals
    except KeyError as exc:
        raise ConfigError(f"missing parameter {exc.args[0]!r}", path) from None
    raise ConfigError(f"unknown space speed family {fam!r}", path)


def _build(table, spec, path):
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("expected a table with a 'family' key", path)
    fam = spec["family"]
    if fam not in table:
        raise ConfigError(f"unknown family {fam!r} (known: {', '.join(sorted(table))})", path)
    try:
        return table[fam]({k: v for k, v in spec.items() if k != "family"})
    except KeyError as exc:
        raise ConfigError(f"missing parameter {exc.args[0]!r}", path) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None
