"""Regular lattices over axis-aligned boxes and the fields that live on them.

Nodes sit at cell centres: along axis ``k`` the node coordinates are
``lo[k] + (i + 0.5) * h`` for ``i = 0 .. shape[k] - 1``.  A node belongs to a
set iff its centre satisfies the set's defining condition.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

_MAGIC = b"BGSF"
_VERSION = 1


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box corners must have equal, nonzero dimension")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} -> {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def pad(self, margin: float) -> "Box":
        return Box(tuple(a - margin for a in self.lo), tuple(b + margin for b in self.hi))

    def contains(self, points, closed: bool = True) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((p >= lo) & (p <= hi), axis=-1)
        return np.all((p > lo) & (p < hi), axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c for a, c in zip(self.lo, other.lo)) and all(
            b >= e for b, e in zip(self.hi, other.hi)
        )

    def uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.d))


@dataclass(frozen=True)
class Grid:
    """Cell-centred lattice with uniform spacing ``h`` covering ``box``."""

    box: Box
    h: float
    shape: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        ext = np.subtract(self.box.hi, self.box.lo) / self.h
        n = np.rint(ext).astype(int)
        if np.any(np.abs(ext - n) > 1e-6 * np.maximum(ext, 1.0)) or np.any(n < 1):
            raise ValueError(f"box extent {ext * self.h} is not a multiple of h={self.h}")
        object.__setattr__(self, "shape", tuple(int(v) for v in n))

    @classmethod
    def over(cls, lo, hi, h: float) -> "Grid":
        return cls(Box(tuple(lo), tuple(hi)), float(h))

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.box.lo)

    def axes(self) -> list[np.ndarray]:
        return [lo + (np.arange(n) + 0.5) * self.h for lo, n in zip(self.box.lo, self.shape)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(size, d)``, row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def fractional_index(self, points) -> np.ndarray:
        return (np.atleast_2d(np.asarray(points, dtype=float)) - self.lo) / self.h - 0.5

    def nearest_index(self, point) -> tuple[int, ...]:
        idx = np.rint(self.fractional_index(point)[0]).astype(int)
        return tuple(int(np.clip(i, 0, n - 1)) for i, n in zip(idx, self.shape))

    def window(self, center, radius: float) -> tuple[slice, ...] | None:
        """Index slices of nodes whose centres may lie within ``radius`` of ``center``.

        Returns None when the ball misses the grid entirely.
        """
        c = np.asarray(center, dtype=float)
        lo = np.floor((c - radius - self.lo) / self.h - 0.5).astype(int)
        hi = np.ceil((c + radius - self.lo) / self.h - 0.5).astype(int) + 1
        out = []
        for a, b, n in zip(lo, hi, self.shape):
            a, b = max(int(a), 0), min(int(b), n)
            if b <= a:
                return None
            out.append(slice(a, b))
        return tuple(out)

    def axes_at(self, sl: tuple[slice, ...]) -> list[np.ndarray]:
        return [ax[s] for ax, s in zip(self.axes(), sl)]

    def expand(self, n: int) -> "Grid":
        """The same lattice extended by ``n`` nodes on every side."""
        return Grid(self.box.pad(n * self.h), self.h)

    def interior(self, n: int) -> tuple[slice, ...]:
        """Slices selecting the original grid inside ``self.expand(n)``."""
        return tuple(slice(n, n + s) for s in self.shape)

    def sub_mask(self, box: Box) -> np.ndarray:
        """Boolean node mask of nodes whose centres lie inside ``box``."""
        return box.contains(self.nodes()).reshape(self.shape)

    def interpolate(self, values: np.ndarray, points, fill: float = np.inf) -> np.ndarray:
        """Multilinear interpolation of node values at arbitrary points.

        Points outside the node hull are clamped to the boundary nodes; points
        outside the box itself get ``fill``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = self.fractional_index(pts).T
        for k, n in enumerate(self.shape):
            coords[k] = np.clip(coords[k], 0, n - 1)
        v = np.asarray(values, dtype=float)
        finite = np.isfinite(v)
        if finite.all():
            out = ndimage.map_coordinates(v, coords, order=1, mode="nearest")
        else:
            # inf nodes poison the blend; treat any inf corner as inf
            big = np.where(finite, v, 0.0)
            out = ndimage.map_coordinates(big, coords, order=1, mode="nearest")
            bad = ndimage.map_coordinates((~finite).astype(float), coords, order=1, mode="nearest")
            out = np.where(bad > 1e-12, np.inf, out)
        inside = self.box.contains(pts)
        return np.where(inside, out, fill)


class ScalarField:
    """Immutable values on the nodes of a :class:`Grid`."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=float, copy=True)
        if arr.shape != grid.shape:
            raise ValueError(f"values shape {arr.shape} does not match grid {grid.shape}")
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    def __repr__(self) -> str:
        return f"ScalarField(shape={self.grid.shape}, h={self.grid.h})"

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def support(self) -> np.ndarray:
        return self.values > 0.5

    def integral(self, box: Box | None = None) -> float:
        v = self.values if box is None else np.where(self.grid.sub_mask(box), self.values, 0.0)
        return float(v.sum() * self.grid.cell_volume)

    def at(self, points) -> np.ndarray:
        return self.grid.interpolate(self.values, points)

    def to_binary(self, path) -> None:
        g = self.grid
        header = _MAGIC + struct.pack("<II", _VERSION, g.d)
        header += struct.pack(f"<{g.d}Q", *g.shape)
        header += struct.pack("<d", g.h)
        header += struct.pack(f"<{g.d}d", *g.box.lo) + struct.pack(f"<{g.d}d", *g.box.hi)
        Path(path).write_bytes(header + np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "ScalarField":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError(f"{path}: not a scalar-field file")
        version, d = struct.unpack_from("<II", raw, 4)
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        off = 12
        shape = struct.unpack_from(f"<{d}Q", raw, off)
        off += 8 * d
        (h,) = struct.unpack_from("<d", raw, off)
        off += 8
        lo = struct.unpack_from(f"<{d}d", raw, off)
        off += 8 * d
        hi = struct.unpack_from(f"<{d}d", raw, off)
        off += 8 * d
        grid = Grid(Box(lo, hi), h)
        if tuple(shape) != grid.shape:
            raise ValueError(f"{path}: header shape {shape} inconsistent with window")
        values = np.frombuffer(raw, dtype="<f8", offset=off).reshape(shape)
        return cls(grid, values)
