"""Nucleation models: marked point processes of birth times and locations.

History-free kinds (``poisson``, ``single_nucleus``, ``staircase``) are
sampled here.  The history-dependent kinds (``thinned``, ``free_space``) only
carry and validate their configuration; they are realised in
:mod:`birthgrowth.simulate` because acceptance depends on the growing set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, UnsupportedAnalyticError
from .families import Constant, MarkLaw, TemporalLaw, UniformBox
from .grid import Box
from .rng import stream

KINDS = ("poisson", "single_nucleus", "staircase", "thinned", "free_space")
ANALYTIC_KINDS = ("poisson", "single_nucleus", "staircase")

# inverse-CDF table resolution for Poisson birth times, as a fraction of horizon
POISSON_TABLE_STEP = 1e-3


@dataclass(frozen=True)
class MarkedPoint:
    birth_time: float
    location: tuple[float, ...]
    grain_id: int

    def __post_init__(self):
        if not self.birth_time >= 0:
            raise DomainError(f"birth time must be >= 0, got {self.birth_time}")


@dataclass(frozen=True)
class NucleationModel:
    kind: str
    window: Box
    temporal: TemporalLaw | None = None
    marks: MarkLaw | None = None
    base: "NucleationModel | None" = None
    region: Box | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown nucleation kind {self.kind!r}", "model.kind")
        if self.kind in ANALYTIC_KINDS:
            if self.temporal is None or self.marks is None:
                raise ConfigError(f"{self.kind} model needs a temporal law and marks", "model")
            if self.kind != "poisson" and not self.temporal.is_probability:
                raise ConfigError(f"{self.kind} birth-time law must be a probability density", "model.temporal")
            object.__setattr__(self, "marks", self.marks.bind(self.window))
        else:
            if self.base is None or self.base.kind not in ANALYTIC_KINDS:
                raise ConfigError(f"{self.kind} model needs a history-free base model", "model.base")
            if self.kind == "free_space":
                if self.region is None:
                    raise ConfigError("free_space model needs a region", "model.region")
                if not self.window.contains_box(self.region):
                    raise ConfigError("free_space region must lie inside the nucleation window", "model.region")

    # constructors -------------------------------------------------------

    @classmethod
    def poisson(cls, intensity: TemporalLaw, marks: MarkLaw, window: Box) -> "NucleationModel":
        return cls("poisson", window, intensity, marks)

    @classmethod
    def homogeneous_poisson(cls, alpha: float, window: Box) -> "NucleationModel":
        """Constant space-time density ``alpha`` on ``window``."""
        return cls("poisson", window, Constant(alpha * window.volume), UniformBox())

    @classmethod
    def single_nucleus(cls, birth: TemporalLaw, marks: MarkLaw, window: Box) -> "NucleationModel":
        return cls("single_nucleus", window, birth, marks)

    @classmethod
    def staircase(cls, first_birth: TemporalLaw, marks: MarkLaw, window: Box) -> "NucleationModel":
        return cls("staircase", window, first_birth, marks)

    @classmethod
    def thinned(cls, base: "NucleationModel") -> "NucleationModel":
        return cls("thinned", base.window, base=base)

    @classmethod
    def free_space(cls, base: "NucleationModel", region: Box) -> "NucleationModel":
        return cls("free_space", base.window, base=base, region=region)

    # ------------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.window.d

    @property
    def history_dependent(self) -> bool:
        return self.kind not in ANALYTIC_KINDS

    @property
    def in_class_g(self) -> bool:
        """Whether the shipped law satisfies the density condition on times and marks."""
        m = self.base if self.history_dependent else self
        return m.temporal.absolutely_continuous and m.marks.absolutely_continuous

    def spec(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.temporal is not None:
            out["temporal"] = self.temporal.spec()
        if self.marks is not None:
            out["marks"] = self.marks.spec()
        if self.base is not None:
            out["base"] = self.base.spec()
        if self.region is not None:
            out["region"] = {"lo": list(self.region.lo), "hi": list(self.region.hi)}
        return out


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(int(seed))


def _points(times: np.ndarray, locs: np.ndarray) -> list[MarkedPoint]:
    order = np.argsort(times, kind="stable")
    return [
        MarkedPoint(float(times[i]), tuple(float(v) for v in locs[i]), j) for j, i in enumerate(order)
    ]


def _require(model: NucleationModel, kind: str):
    if model.kind != kind:
        raise ConfigError(f"expected a {kind} model, got {model.kind}")


def sample_poisson(model: NucleationModel, horizon: float, seed) -> list[MarkedPoint]:
    """Marked Poisson nucleation on ``[0, horizon] x window``.

    The total count is Poisson with mean ``Lambda~([0, horizon])``; times are
    drawn by inverse CDF on a cumulative tabulated at ``1e-3 * horizon``.
    """
    _require(model, "poisson")
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    rng = _rng(seed)
    total = float(model.temporal.cumulative(horizon))
    if not math.isfinite(total):
        raise ConfigError("temporal intensity is not integrable over [0, horizon]", "model.temporal")
    n = int(rng.poisson(total)) if total > 0 else 0
    if n == 0:
        return []
    knots = np.linspace(0.0, horizon, int(round(1.0 / POISSON_TABLE_STEP)) + 1)
    cum = model.temporal.cumulative(knots)
    # drop flat stretches so interpolation stays single-valued
    keep = np.concatenate([[True], np.diff(cum) > 0])
    times = np.interp(rng.uniform(0.0, total, size=n), cum[keep], knots[keep])
    locs = model.marks.sample(rng, n)
    return _points(times, locs)


def sample_single_nucleus(model: NucleationModel, seed) -> list[MarkedPoint]:
    _require(model, "single_nucleus")
    rng = _rng(seed)
    t = model.temporal.sample(rng, 1)
    return _points(t, model.marks.sample(rng, 1))


def sample_staircase(model: NucleationModel, horizon: float, seed) -> list[MarkedPoint]:
    """First birth from the density, then one birth per unit time up to ``horizon``."""
    _require(model, "staircase")
    rng = _rng(seed)
    t1 = float(model.temporal.sample(rng, 1)[0])
    if t1 > horizon:
        return []
    times = t1 + np.arange(int(math.floor(horizon - t1)) + 1, dtype=float)
    return _points(times, model.marks.sample(rng, times.size))


def sample(model: NucleationModel, horizon: float, seed) -> list[MarkedPoint]:
    """Dispatch to the sampler of a history-free model."""
    if model.kind == "poisson":
        return sample_poisson(model, horizon, seed)
    if model.kind == "single_nucleus":
        pts = sample_single_nucleus(model, seed)
        return [p for p in pts if p.birth_time <= horizon]
    if model.kind == "staircase":
        return sample_staircase(model, horizon, seed)
    raise UnsupportedAnalyticError(f"{model.kind} nucleation depends on the growing set; use simulate.realize")


def _analytic(model: NucleationModel) -> NucleationModel:
    if model.history_dependent:
        raise UnsupportedAnalyticError(
            f"{model.kind} intensity depends on the process history; estimate it by simulation"
        )
    return model


def marginal_cumulative(model: NucleationModel, t) -> np.ndarray:
    """Vectorised ``Lambda~([0, t])``; zero for ``t <= 0``."""
    model = _analytic(model)
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    law = model.temporal
    if model.kind == "staircase":
        top = int(math.floor(float(np.max(t)))) if t.size else 0
        return sum(law.cumulative(t - j) * (t - j >= 0) for j in range(top + 1))
    return law.cumulative(t)


def marginal_cumulative_intensity(model: NucleationModel, t: float) -> float:
    """Expected number of births in ``[0, t]``."""
    _analytic(model)
    if t < 0:
        raise DomainError("t must be >= 0")
    return float(marginal_cumulative(model, t))


def temporal_density(model: NucleationModel, t) -> np.ndarray:
    """Marginal birth-time density; for the staircase the sum of unit shifts."""
    model = _analytic(model)
    t = np.asarray(t, dtype=float)
    law = model.temporal
    if model.kind == "staircase":
        top = int(math.floor(float(np.max(t)))) if t.size else 0
        return sum(law.density(t - k) * (t - k >= 0) for k in range(max(top, 0) + 1))
    return law.density(t)


def temporal_breakpoints(model: NucleationModel, t_max: float) -> list[float]:
    """Times in ``(0, t_max)`` where the marginal density may jump or kink."""
    law = _analytic(model).temporal
    pts = list(law.breakpoints(t_max))
    if model.kind == "staircase":
        pts = [b + k for b in [0.0, *pts] for k in range(int(math.floor(t_max)) + 1)]
    return sorted({p for p in pts if 0 < p < t_max})


def intensity_density(model: NucleationModel, t: float, x) -> np.ndarray:
    """Space-time intensity ``lambda(t) q(t, x)``."""
    lam = temporal_density(model, t)
    return lam * model.marks.pdf(np.atleast_2d(x))


def count_in(points: Sequence[MarkedPoint], t0: float, t1: float) -> int:
    """Number of births with ``t0 <= T <= t1``."""
    return sum(1 for p in points if t0 <= p.birth_time <= t1)
