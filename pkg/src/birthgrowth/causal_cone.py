"""Causal cones C(t, x): membership, sections, measure and its time derivative.

A birth at ``(s, y)`` lies in ``C(t, x)`` iff its grain covers ``x`` by time
``t``.  For ``G = G(t)`` the section ``S_x(s, t)`` is the ball of radius
``R(s, t)`` about ``x``; for ``G = G(x)`` it is ``{y : tau(x, y) <= t - s}``
with one travel-time field solved from ``x`` (travel times are symmetric).

Space-only sections are smoothed over one cell in the travel-time direction,
``chi = clamp((t - s - tau) / eps + 1/2, 0, 1)`` with ``eps = h / G(y)``.  The
s-integrals are then done exactly per lattice node, and differentiating in
``t`` gives the coarea band sum of ``q * w`` over the level set ``tau = t - s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import nucleation
from .errors import DomainError
from .growth import ArrivalField, GrowthField, radius
from .nucleation import NucleationModel
from .quadrature import adaptive_simpson, gauss_legendre_rule

CONE_TOL = 1e-6


@dataclass(frozen=True)
class CausalCone:
    x: tuple[float, ...]
    t: float
    growth: GrowthField

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.ravel(self.x)))
        if not self.t >= 0:
            raise DomainError("cone time must be >= 0")

    @property
    def point(self) -> np.ndarray:
        return np.asarray(self.x)

    def at_time(self, t: float) -> "CausalCone":
        return CausalCone(self.x, t, self.growth)


@lru_cache(maxsize=64)
def _arrival_from(growth: GrowthField, x: tuple[float, ...]) -> ArrivalField:
    return ArrivalField(growth, x)


def arrival_from_target(cone: CausalCone) -> ArrivalField:
    """Cached travel times ``tau(x, .)`` for a space-only cone."""
    return _arrival_from(cone.growth, cone.x)


def kernel(cone: CausalCone, y) -> np.ndarray:
    """Section-boundary weight ``w(y) = |grad_x S| / |grad_y S|``."""
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    if cone.growth.kind == "time_only":
        return np.ones(len(pts))
    gx = cone.growth.speed_at(cone.point[None, :])[0]
    return cone.growth.speed_at(pts) / gx


def cone_contains(cone: CausalCone, s, y) -> np.ndarray:
    """Whether births at ``(s, y)`` fall in the cone (vectorised)."""
    s = np.asarray(s, dtype=float)
    pts = np.asarray(y, dtype=float)
    pts2 = pts.reshape(-1, len(cone.x))
    s_b = np.broadcast_to(s, pts2.shape[:1]) if s.ndim == 0 else s.reshape(-1)
    ok = (s_b >= 0) & (s_b <= cone.t)
    out = np.zeros(pts2.shape[0], dtype=bool)
    if np.any(ok):
        if cone.growth.kind == "time_only":
            dist = np.linalg.norm(pts2[ok] - cone.point, axis=-1)
            out[ok] = dist <= radius(cone.growth, s_b[ok], cone.t)
        else:
            tau = arrival_from_target(cone).at(pts2[ok])
            out[ok] = tau <= cone.t - s_b[ok]
    return out.reshape(pts.shape[:-1]) if pts.ndim > 1 else bool(out[0])


def _node_data(cone: CausalCone, marks):
    """Travel times, speeds and mark mass per node for space-only cones."""
    arr = arrival_from_target(cone)
    grid = arr.field.grid
    tau = arr.values.ravel()
    keep = np.isfinite(tau)
    nodes = grid.nodes()[keep]
    mass = marks.pdf(nodes) * grid.cell_volume
    sel = mass > 0
    return tau[keep][sel], cone.growth.speed.values.ravel()[keep][sel], mass[sel], grid.h


def section_mass(cone: CausalCone, s: float, marks) -> float:
    """``Q(S_x(s, t))``: mark probability of the cone section at birth time ``s``."""
    if not 0 <= s <= cone.t:
        raise DomainError("section time must lie in [0, t]")
    if s == cone.t:
        return 0.0
    if cone.growth.kind == "time_only":
        return float(marks.ball_mass(cone.point, float(radius(cone.growth, s, cone.t))))
    tau, g, mass, h = _node_data(cone, marks)
    chi = np.clip((cone.t - s - tau) * g / h + 0.5, 0.0, 1.0)
    return float(np.dot(mass, chi))


def _analytic(model: NucleationModel) -> NucleationModel:
    if model.history_dependent:
        raise nucleation.UnsupportedAnalyticError(
            f"{model.kind} nucleation has no analytic cone measure; estimate it by simulation"
        )
    return model


def _time_breaks(cone: CausalCone, model: NucleationModel) -> list[float]:
    pts = nucleation.temporal_breakpoints(model, cone.t)
    gr = cone.growth
    pts += [b for b in gr.time_speed.breakpoints() if 0 < b < cone.t]
    # birth times whose grain radius at t meets a kink of the mark masses
    top = float(gr.primitive(cone.t))
    for r in model.marks.critical_radii(cone.point):
        if 0 < r < top:
            s = float(gr.inverse_primitive(top - r))
            if 0 < s < cone.t:
                pts.append(s)
    return sorted(set(pts))


def _band_terms(cone: CausalCone, model: NucleationModel):
    """Per-node smoothed cone mass and its t-derivative (space-only)."""
    tau, g, mass, h = _node_data(cone, model.marks)
    t = cone.t
    eps = h / g
    b = t - tau + 0.5 * eps
    a = b - eps
    lo = np.clip(a, 0.0, t)
    hi = np.clip(b, 0.0, t)
    cum = lambda u: nucleation.marginal_cumulative(model, u)
    c_lo, c_hi = cum(lo), cum(hi)
    # int_lo^hi Lambda~(s) ds by 8-point Gauss-Legendre on each node's band
    nodes, weights = gauss_legendre_rule(lo, hi, 8)
    band = np.sum(weights * cum(nodes), axis=-1)
    # int_lo^hi lambda(s) (b - s) / eps ds, integrated by parts
    ramp = ((b - hi) * c_hi - (b - lo) * c_lo + band) / eps
    measure = c_lo + ramp
    lam_t = float(nucleation.temporal_density(model, t))
    endpoint = np.clip((b - t) / eps, 0.0, 1.0) * lam_t
    rate = (c_hi - c_lo) / eps + endpoint
    return mass, measure, rate


def cone_measure(cone: CausalCone, model: NucleationModel, tol: float = CONE_TOL) -> float:
    """``Lambda(C(t, x)) = int_0^t lambda(s) Q(S_x(s, t)) ds``."""
    _analytic(model)
    if cone.t == 0:
        return 0.0
    if cone.growth.kind == "time_only":
        x, t, gr, q = cone.point, cone.t, cone.growth, model.marks

        def f(s):
            lam = float(nucleation.temporal_density(model, s))
            return 0.0 if lam == 0 else lam * q.ball_mass(x, float(radius(gr, s, t)))

        return float(adaptive_simpson(f, 0.0, t, tol=tol, breakpoints=_time_breaks(cone, model), smooth_ends=True))
    mass, measure, _ = _band_terms(cone, model)
    return float(np.dot(mass, measure))


def cone_measure_rate(cone: CausalCone, model: NucleationModel, tol: float = CONE_TOL) -> float:
    """``d/dt Lambda(C(t, x))`` as the section-boundary integral of ``alpha * w``."""
    _analytic(model)
    if cone.t == 0:
        return 0.0
    if cone.growth.kind == "time_only":
        x, t, gr, q = cone.point, cone.t, cone.growth, model.marks

        def f(s):
            if s >= t:
                return 0.0
            lam = float(nucleation.temporal_density(model, s))
            return 0.0 if lam == 0 else lam * q.sphere_mass(x, float(radius(gr, s, t)))

        integral = adaptive_simpson(f, 0.0, t, tol=tol, breakpoints=_time_breaks(cone, model), smooth_ends=True)
        return float(gr.speed_at_time(t)) * float(integral)
    mass, _, rate = _band_terms(cone, model)
    return float(np.dot(mass, rate))


def speed_at_cone(cone: CausalCone) -> float:
    """Front speed at the cone apex: ``G(t)`` or ``G(x)``."""
    if cone.growth.kind == "time_only":
        return float(cone.growth.speed_at_time(cone.t))
    return float(cone.growth.speed_at(cone.point[None, :])[0])


def extended_surface_density(cone: CausalCone, model: NucleationModel, tol: float = CONE_TOL) -> float:
    """Mean extended surface density ``S_ex(t, x)``: the cone rate divided by G."""
    return cone_measure_rate(cone, model, tol) / speed_at_cone(cone)


def evaluate_batch(pairs, growth: GrowthField, model: NucleationModel, tol: float = CONE_TOL) -> list[dict]:
    """``{t, x, cone_measure, rate, s_ex}`` for each ``(t, x)`` pair."""
    rows = []
    for t, x in pairs:
        cone = CausalCone(tuple(x), float(t), growth)
        lam = cone_measure(cone, model, tol)
        rate = cone_measure_rate(cone, model, tol)
        rows.append({"t": float(t), "x": cone.x, "cone_measure": lam, "rate": rate, "s_ex": rate / speed_at_cone(cone)})
    return rows


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def kjma_extended_volume(alpha: float, G: float, t, d: int = 2):
    """``Lambda(C)`` for homogeneous Poisson nucleation far from the window edge."""
    return alpha * ball_volume(d) * G**d * np.asarray(t, dtype=float) ** (d + 1) / (d + 1)


def kjma_coverage(alpha: float, G: float, t, d: int = 2):
    return -np.expm1(-kjma_extended_volume(alpha, G, t, d))


def kjma_extended_rate(alpha: float, G: float, t, d: int = 2):
    return alpha * ball_volume(d) * G**d * np.asarray(t, dtype=float) ** d


def kjma_coverage_rate(alpha: float, G: float, t, d: int = 2):
    return kjma_extended_rate(alpha, G, t, d) * np.exp(-kjma_extended_volume(alpha, G, t, d))


def monte_carlo_cone_measure(
    cone: CausalCone, model: NucleationModel, n: int = 10**7, seed: int = 0, chunk: int = 10**6
) -> tuple[float, float]:
    """Hit-or-miss integration of ``alpha`` over the cone; returns (estimate, SE).

    Samples ``(s, y)`` uniformly on ``[0, t] x`` the bounding box of the
    largest section and keeps those inside the cone.
    """
    _analytic(model)
    t = cone.t
    if cone.growth.kind == "time_only":
        reach = float(radius(cone.growth, 0.0, t))
    else:
        reach = cone.growth.G0 * t
    lo = np.maximum(cone.point - reach, model.window.lo)
    hi = np.minimum(cone.point + reach, model.window.hi)
    vol = t * float(np.prod(hi - lo))
    rng = np.random.Generator(np.random.Philox(seed))
    total = total2 = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        s = rng.uniform(0.0, t, size=m)
        y = rng.uniform(lo, hi, size=(m, len(lo)))
        inside = cone_contains(cone, s, y)
        val = np.zeros(m)
        if np.any(inside):
            val[inside] = nucleation.temporal_density(model, s[inside]) * model.marks.pdf(y[inside])
        val *= vol
        total += val.sum()
        total2 += np.dot(val, val)
        done += m
    mean = total / n
    var = max(total2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


def staircase_coverage(cone: CausalCone, model: NucleationModel, tol: float = 1e-8) -> float:
    """``P(x in Theta^t)`` for the staircase model by quadrature over the first birth.

    ``1 - P(N(C) = 0)`` with
    ``P(N(C) = 0) = 1 - F(t) + int_0^t f(u) prod_j (1 - Q(S_x(u + j, t))) du``.
    """
    if model.kind != "staircase":
        raise DomainError("staircase coverage oracle needs a staircase model")
    t, law, q = cone.t, model.temporal, model.marks

    def f(u):
        dens = float(law.density(u))
        if dens == 0:
            return 0.0
        prod = 1.0
        j = 0
        while u + j <= t:
            prod *= 1.0 - section_mass(cone, u + j, q)
            j += 1
        return dens * prod

    # the number of surviving births jumps where u + j crosses t
    shifts = [t - j for j in range(int(math.floor(t)) + 1)]
    breaks = sorted({b for b in [*shifts, *law.breakpoints(t)] if 0 < b < t})
    empty = 1.0 - float(law.cumulative(t)) + adaptive_simpson(f, 0.0, t, tol=tol, breakpoints=breaks)
    return 1.0 - empty
