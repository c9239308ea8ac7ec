"""First-order upwind fast marching for ``|grad tau| = 1 / G(x)`` on a lattice."""

from __future__ import annotations

import heapq

import numpy as np
from numba import njit

# nodes closer than this many spacings to the source are initialised with the
# straight-ray travel time |x - y| / G(x)
INIT_RADIUS = 1.5


@njit(cache=True)
def _local_solve(a, m, f):
    # a[:m] sorted ascending upwind neighbour values, f = h / G
    t = a[0] + f
    s = a[0]
    s2 = a[0] * a[0]
    for k in range(1, m):
        if t <= a[k]:
            break
        s += a[k]
        s2 += a[k] * a[k]
        n = k + 1
        disc = s * s - n * (s2 - f * f)
        if disc < 0.0:
            break
        t = (s + np.sqrt(disc)) / n
    return t


@njit(cache=True)
def _upwind(tau, i, shape, strides, d):
    a = np.empty(3)
    m = 0
    for k in range(d):
        idx = (i // strides[k]) % shape[k]
        best = np.inf
        if idx > 0:
            v = tau[i - strides[k]]
            if v < best:
                best = v
        if idx < shape[k] - 1:
            v = tau[i + strides[k]]
            if v < best:
                best = v
        if best < np.inf:
            a[m] = best
            m += 1
    a[:m].sort()
    return a, m


@njit(cache=True)
def _march(speed, shape, strides, h, init_idx, init_val, t_stop):
    n = speed.size
    d = shape.size
    tau = np.full(n, np.inf)
    frozen = np.zeros(n, np.bool_)
    done = np.zeros(n, np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for j in range(init_idx.size):
        tau[init_idx[j]] = init_val[j]
        frozen[init_idx[j]] = True
    for j in range(init_idx.size):
        heapq.heappush(heap, (init_val[j], np.int64(init_idx[j])))
    while len(heap) > 0:
        t, i = heapq.heappop(heap)
        if done[i] or t > tau[i]:
            continue
        if t > t_stop:
            break
        done[i] = True
        frozen[i] = True
        for k in range(d):
            idx = (i // strides[k]) % shape[k]
            for sgn in (-1, 1):
                if (sgn < 0 and idx == 0) or (sgn > 0 and idx == shape[k] - 1):
                    continue
                nb = i + sgn * strides[k]
                if frozen[nb]:
                    continue
                a, m = _upwind_frozen(tau, frozen, nb, shape, strides, d)
                cand = _local_solve(a, m, h / speed[nb])
                if cand < tau[nb]:
                    tau[nb] = cand
                    heapq.heappush(heap, (cand, nb))
    # trial values beyond t_stop are not final
    for i in range(n):
        if not done[i]:
            tau[i] = np.inf
    return tau


@njit(cache=True)
def _upwind_frozen(tau, frozen, i, shape, strides, d):
    a = np.empty(3)
    m = 0
    for k in range(d):
        idx = (i // strides[k]) % shape[k]
        best = np.inf
        if idx > 0 and frozen[i - strides[k]]:
            best = min(best, tau[i - strides[k]])
        if idx < shape[k] - 1 and frozen[i + strides[k]]:
            best = min(best, tau[i + strides[k]])
        if best < np.inf:
            a[m] = best
            m += 1
    a[:m].sort()
    return a, m


@njit(cache=True)
def _residuals(tau, speed, shape, strides, h, skip):
    out = np.zeros(tau.size)
    d = shape.size
    for i in range(tau.size):
        if skip[i] or not np.isfinite(tau[i]):
            continue
        a, m = _upwind(tau, i, shape, strides, d)
        f = h / speed[i]
        s = 0.0
        for k in range(m):
            if a[k] < tau[i]:
                s += (tau[i] - a[k]) ** 2
        out[i] = abs(np.sqrt(s) - f) / f
    return out


def _strides(shape) -> np.ndarray:
    st = np.ones(len(shape), dtype=np.int64)
    for k in range(len(shape) - 2, -1, -1):
        st[k] = st[k + 1] * shape[k + 1]
    return st


def source_nodes(nodes_axes, h: float, source, init_radius: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices and distances of nodes near ``source``.

    "Near" means within ``max(INIT_RADIUS * h, init_radius)``.
    """
    src = np.asarray(source, dtype=float)
    rad = max(INIT_RADIUS * h, init_radius or 0.0)
    sl = []
    for ax, c in zip(nodes_axes, src):
        lo = np.searchsorted(ax, c - rad - 1e-12)
        hi = np.searchsorted(ax, c + rad + 1e-12, side="right")
        sl.append(np.arange(lo, hi))
    sub = np.meshgrid(*sl, indexing="ij")
    pts = np.stack([ax[s] for ax, s in zip(nodes_axes, sub)], axis=-1)
    dist = np.linalg.norm(pts - src, axis=-1)
    keep = dist <= rad + 1e-12
    shape = tuple(len(a) for a in nodes_axes)
    flat = np.ravel_multi_index(tuple(s[keep] for s in sub), shape)
    return flat.astype(np.int64), dist[keep]


def travel_times(
    speed: np.ndarray, axes, h: float, source, t_stop: float = np.inf, init_radius: float | None = None
) -> np.ndarray:
    """Arrival times from ``source`` on the lattice given by ``axes``.

    Marching stops once the front passes ``t_stop``; later nodes stay ``inf``.
    A physical ``init_radius`` enlarges the straight-ray start region, which
    removes the point-source log factor from the error when G is constant
    near the source.
    """
    speed = np.ascontiguousarray(speed, dtype=float)
    shape = np.asarray(speed.shape, dtype=np.int64)
    idx, dist = source_nodes(axes, h, source, init_radius)
    if idx.size == 0:
        raise ValueError("source has no lattice nodes nearby")
    init = dist / speed.ravel()[idx]
    tau = _march(speed.ravel(), shape, _strides(speed.shape), float(h), idx, init, float(t_stop))
    return tau.reshape(speed.shape)


def eikonal_residual(tau: np.ndarray, speed: np.ndarray, h: float, skip: np.ndarray | None = None) -> np.ndarray:
    """Relative residual of the upwind scheme at every finite node not in ``skip``."""
    flat_skip = np.zeros(tau.size, dtype=np.bool_) if skip is None else np.asarray(skip, bool).ravel()
    r = _residuals(
        np.ascontiguousarray(tau, float).ravel(),
        np.ascontiguousarray(speed, float).ravel(),
        np.asarray(tau.shape, dtype=np.int64),
        _strides(tau.shape),
        float(h),
        flat_skip,
    )
    return r.reshape(tau.shape)
