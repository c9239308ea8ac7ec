"""One-dimensional quadrature used by the causal-cone integrals."""

from __future__ import annotations

import warnings
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

DEFAULT_TOL = 1e-6
DEFAULT_MAX_DEPTH = 30


class QuadratureWarning(RuntimeWarning):
    pass


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre_rule(a, b, n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights mapped to [a, b]; broadcasts over array-valued ends."""
    x, w = gauss_legendre(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def fixed_gauss(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, n: int = 64) -> float:
    """n-point Gauss-Legendre on [a, b] for a vectorised integrand."""
    if b <= a:
        return 0.0
    x, w = gauss_legendre_rule(a, b, n)
    return float(np.dot(w, f(x)))


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = DEFAULT_MAX_DEPTH,
    breakpoints: Iterable[float] = (),
    min_depth: int = 3,
    smooth_ends: bool = False,
) -> float:
    """Adaptive Simpson quadrature with absolute tolerance ``tol``.

    Interior ``breakpoints`` split the interval first so that known kinks and
    jumps of ``f`` fall on panel edges; the tolerance is shared in proportion
    to panel length.  With ``smooth_ends`` each panel is mapped through the
    cubic ``s = lo + (hi - lo) * (3u^2 - 2u^3)``, which flattens square-root
    behaviour at the panel edges (a sphere grazing a face or corner of a box).
    """
    if b <= a:
        return 0.0
    cuts = sorted({a, b, *(float(c) for c in breakpoints if a < c < b)})
    total = 0.0
    span = b - a
    truncated = False
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        g, ga, gb = f, lo, hi
        if smooth_ends:
            g, ga, gb = _smoothed(f, lo, hi), 0.0, 1.0
        val, hit = _simpson_panel(g, ga, gb, tol * (hi - lo) / span, max_depth, min_depth)
        total += val
        truncated |= hit
    if truncated:
        warnings.warn("adaptive Simpson reached max depth", QuadratureWarning, stacklevel=2)
    return total


def _smoothed(f, lo, hi):
    w = hi - lo

    def g(u):
        u = min(max(u, 0.0), 1.0)
        jac = 6.0 * u * (1.0 - u) * w
        if jac == 0.0:
            return 0.0
        # keep s strictly inside the panel so one-sided values stay one-sided
        s = min(max(lo + w * u * u * (3.0 - 2.0 * u), np.nextafter(lo, hi)), np.nextafter(hi, lo))
        return f(s) * jac

    return g


def _simpson_panel(f, a, b, tol, max_depth, min_depth):
    # one-sided end values, so a jump sitting on a breakpoint belongs to neither panel
    fa, fm, fb = f(np.nextafter(a, b)), f(0.5 * (a + b)), f(np.nextafter(b, a))
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    hit = False
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
        right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
        delta = left + right - whole
        if (depth >= min_depth and abs(delta) <= 15.0 * tol) or depth >= max_depth:
            hit |= depth >= max_depth and abs(delta) > 15.0 * tol
            total += left + right + delta / 15.0
        else:
            stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))
            stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1))
    return total, hit
