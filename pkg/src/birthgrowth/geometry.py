"""Exact planar measures of discs clipped to rectangles, plus sphere quadrature."""

from __future__ import annotations

import math

import numpy as np

from .quadrature import gauss_legendre, gauss_legendre_rule


def _seg_integral(u0: float, u1: float, R: float) -> float:
    # integral of sqrt(R^2 - u^2) over [u0, u1], |u| <= R
    def F(u):
        u = min(max(u, -R), R)
        # sqrt(R^2 - u^2) magnifies rounding in u near the endpoints
        if R - abs(u) <= 1e-12 * R:
            u = math.copysign(R, u)
        return 0.5 * (u * math.sqrt(max(R * R - u * u, 0.0)) + R * R * math.asin(u / R))

    return F(u1) - F(u0)


def disc_rect_area(center, R: float, lo, hi) -> float:
    """Area of the disc ``B_R(center)`` intersected with the rectangle [lo, hi]."""
    if R <= 0:
        return 0.0
    cx, cy = float(center[0]), float(center[1])
    x0, y0 = float(lo[0]), float(lo[1])
    x1, y1 = float(hi[0]), float(hi[1])
    a, b = max(x0, cx - R), min(x1, cx + R)
    if b <= a or cy - R >= y1 or cy + R <= y0:
        return 0.0
    # the apex column is a cut too, so no panel midpoint sits on a tangency
    cuts = {a, b} | ({cx} if a < cx < b else set())
    for yl in (y0, y1):
        dy = yl - cy
        if abs(dy) < R:
            w = math.sqrt(R * R - dy * dy)
            for xc in (cx - w, cx + w):
                if a < xc < b:
                    cuts.add(xc)
    cuts = sorted(cuts)
    area = 0.0
    for p, q in zip(cuts[:-1], cuts[1:]):
        m = 0.5 * (p + q)
        s = math.sqrt(max(R * R - (m - cx) ** 2, 0.0))
        # upper boundary: cy + s clamped to [y0, y1]
        top = cy + s
        if top >= y1:
            upper = y1 * (q - p)
        elif top <= y0:
            upper = y0 * (q - p)
        else:
            upper = cy * (q - p) + _seg_integral(p - cx, q - cx, R)
        bot = cy - s
        if bot <= y0:
            lower = y0 * (q - p)
        elif bot >= y1:
            lower = y1 * (q - p)
        else:
            lower = cy * (q - p) - _seg_integral(p - cx, q - cx, R)
        area += max(upper - lower, 0.0)
    return area


def circle_rect_length(center, R: float, lo, hi) -> float:
    """Length of the circle ``dB_R(center)`` lying inside the rectangle [lo, hi]."""
    if R <= 0:
        return 0.0
    cx, cy = float(center[0]), float(center[1])
    angles = [0.0, 2.0 * math.pi]
    for k, (c, lines) in enumerate(((cx, (lo[0], hi[0])), (cy, (lo[1], hi[1])))):
        for line in lines:
            r = (float(line) - c) / R
            if -1.0 < r < 1.0:
                base = math.acos(r) if k == 0 else math.asin(r)
                for th in (base, -base if k == 0 else math.pi - base):
                    angles.append(th % (2.0 * math.pi))
    angles = sorted(angles)
    total = 0.0
    for p, q in zip(angles[:-1], angles[1:]):
        if q - p <= 0:
            continue
        m = 0.5 * (p + q)
        x, y = cx + R * math.cos(m), cy + R * math.sin(m)
        if lo[0] <= x <= hi[0] and lo[1] <= y <= hi[1]:
            total += R * (q - p)
    return total


def sphere_points(d: int, n_polar: int = 32, n_azimuth: int = 128):
    """Unit-sphere quadrature: directions (m, d) and weights summing to |S^{d-1}|."""
    if d == 2:
        th = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(n_azimuth, 2.0 * math.pi / n_azimuth)
    if d == 3:
        z, wz = gauss_legendre(n_polar)
        ph = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
        Z, PH = np.meshgrid(z, ph, indexing="ij")
        rho = np.sqrt(1.0 - Z**2)
        dirs = np.stack([rho * np.cos(PH), rho * np.sin(PH), Z], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(n_azimuth, 2.0 * math.pi / n_azimuth)[None, :]).ravel()
        return dirs, w
    raise ValueError(f"unsupported dimension {d}")


def sphere_integral(pdf, center, R: float) -> float:
    """Integral of ``pdf`` over the sphere of radius R about ``center`` (numeric)."""
    if R <= 0:
        return 0.0
    c = np.asarray(center, dtype=float)
    dirs, w = sphere_points(c.size)
    return float(np.dot(w, pdf(c + R * dirs))) * R ** (c.size - 1)


def ball_integral(pdf, center, R: float, n_radial: int = 64) -> float:
    """Integral of ``pdf`` over the ball of radius R (Gauss-Legendre in radius)."""
    if R <= 0:
        return 0.0
    c = np.asarray(center, dtype=float)
    d = c.size
    dirs, w = sphere_points(d)
    rho, wr = gauss_legendre_rule(0.0, R, n_radial)
    pts = c + rho[:, None, None] * dirs[None, :, :]
    vals = pdf(pts.reshape(-1, d)).reshape(rho.size, -1)
    return float(np.dot(wr * rho ** (d - 1), vals @ w))
