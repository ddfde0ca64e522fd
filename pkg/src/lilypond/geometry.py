"""Points, windows, configurations and a hashed uniform-grid index.

Coordinates are stored as ``float64`` arrays of shape ``(n, d)``.  The grid
buckets points by integer cell coordinates and looks buckets up through a
64-bit hash of the cell; occupied cells are guaranteed collision-free and
every lookup is confirmed against the stored cell coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import gamma

from . import tolerance

MAX_DIM = 8

# odd 64-bit multipliers for the cell hash
_HASH_MULT = np.array(
    [
        0x9E3779B97F4A7C15,
        0xC2B2AE3D27D4EB4F,
        0x165667B19E3779F9,
        0xD6E8FEB86659FD93,
        0xA0761D6478BD642F,
        0xE7037ED1A0B428DB,
        0x8EBC6AF09C88C6E3,
        0x589965CC75374CC3,
    ],
    dtype=np.uint64,
)


class GeometryError(ValueError):
    """Invalid geometric input (bad dimension, duplicate points, ...)."""


def ball_volume(d: int, r: float = 1.0) -> float:
    """Volume ``b_d r^d`` of a ``d``-ball of radius ``r``."""
    if r < 0:
        raise GeometryError(f"negative radius {r}")
    return math.pi ** (d / 2) / gamma(d / 2 + 1) * r**d


def unit_vector(d: int, axis: int = 0) -> np.ndarray:
    e = np.zeros(d)
    e[axis] = 1.0
    return e


def as_point(x, d: int | None = None) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1:
        raise GeometryError(f"a point must be a flat coordinate vector, got shape {p.shape}")
    if d is not None and p.shape[0] != d:
        raise GeometryError(f"expected a {d}-dimensional point, got {p.shape[0]} coordinates")
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"non-finite coordinates in {p}")
    return p


def _cell_hash(cells: np.ndarray, salt: int = 0) -> np.ndarray:
    c = cells.astype(np.uint64)
    mult = _HASH_MULT[: cells.shape[1]] + np.uint64(2 * salt)
    return (c * mult).sum(axis=1, dtype=np.uint64)


class GridIndex:
    """Uniform grid over a fixed point array.

    Args:
        points: ``(n, d)`` coordinates.
        cell_size: side of the grid cells; defaults to the mean spacing.
    """

    def __init__(self, points: np.ndarray, cell_size: float | None = None):
        self.salt = 0
        self.points = np.asarray(points, dtype=float)
        n, d = self.points.shape
        self.d = d
        if cell_size is None:
            cell_size = _mean_spacing(self.points)
        if not cell_size > 0 or not math.isfinite(cell_size):
            raise GeometryError(f"bad grid cell size {cell_size}")
        self.h = float(cell_size)
        if n == 0:
            self.cells = np.zeros((0, d), dtype=np.int64)
            self.order = np.zeros(0, dtype=np.int64)
            self.ukeys = np.zeros(0, dtype=np.uint64)
            self.ucells = np.zeros((0, d), dtype=np.int64)
            self.starts = np.zeros(0, dtype=np.int64)
            self.counts = np.zeros(0, dtype=np.int64)
            return
        self.cells = np.floor(self.points / self.h).astype(np.int64)
        self.order = np.lexsort(self.cells.T[::-1])
        sc = self.cells[self.order]
        new = np.ones(n, dtype=bool)
        new[1:] = np.any(sc[1:] != sc[:-1], axis=1)
        starts = np.flatnonzero(new)
        counts = np.diff(np.append(starts, n))
        ucells = sc[starts]
        for salt in range(8):
            keys = _cell_hash(ucells, salt)
            korder = np.argsort(keys)
            sk = keys[korder]
            if not np.any(sk[1:] == sk[:-1]):
                break
        else:  # pragma: no cover
            raise GeometryError("could not find a collision-free cell hash")
        self.salt = salt
        self.ukeys = sk
        self.ucells = ucells[korder]
        self.starts = starts[korder]
        self.counts = counts[korder]

    def __len__(self):
        return self.points.shape[0]

    def _bucket(self, cells):
        """Bucket position of each cell row and whether that cell is occupied."""
        if len(self.ukeys) == 0:
            return np.zeros(len(cells), np.int64), np.zeros(len(cells), bool)
        key_array = _cell_hash(cells, self.salt)
        pos = np.minimum(np.searchsorted(self.ukeys, key_array), len(self.ukeys) - 1)
        found = self.ukeys[pos] == key_array
        found &= np.all(self.ucells[pos] == cells, axis=1)
        return pos, found

    def query(self, center, radius: float, open: bool = False) -> np.ndarray:
        """Indices of points within ``radius`` of ``center`` (sorted)."""
        c = as_point(center, self.d)
        if radius < 0:
            raise GeometryError("negative query radius")
        n = len(self)
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        lo = np.floor((c - radius) / self.h).astype(np.int64)
        hi = np.floor((c + radius) / self.h).astype(np.int64)
        ncell = np.prod((hi - lo + 1).astype(float))
        if ncell > 2 * n + 8:
            cand = np.arange(n)
        else:
            axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
            pos, found = self._bucket(grid)
            pos = pos[found]
            if len(pos) == 0:
                return np.zeros(0, dtype=np.int64)
            cand = np.concatenate([self.order[s : s + k] for s, k in zip(self.starts[pos], self.counts[pos])])
        dist = np.linalg.norm(self.points[cand] - c, axis=1)
        keep = dist < radius if open else dist <= radius
        return np.sort(cand[keep])

    def pairs(self, radius: float):
        """All unordered pairs ``i < j`` with ``|p_i - p_j| <= radius``.

        Returns ``(i, j, dist)`` arrays.
        """
        n = len(self)
        empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        if n < 2:
            return empty
        reach = int(math.ceil(radius / self.h))
        if (2 * reach + 1) ** self.d > 4 * n * n:
            i, j = np.triu_indices(n, 1)
            dist = np.linalg.norm(self.points[i] - self.points[j], axis=1)
            keep = dist <= radius
            return i[keep], j[keep], dist[keep]
        out_i, out_j, out_d = [], [], []
        m = len(self.ukeys)
        for off in product(range(-reach, reach + 1), repeat=self.d):
            off = np.array(off, dtype=np.int64)
            nz = np.flatnonzero(off)
            if len(nz) and off[nz[0]] < 0:
                continue  # each unordered pair of cells once
            same = len(nz) == 0
            if same:
                a = np.arange(m)
                b = a
            else:
                pos, found = self._bucket(self.ucells + off)
                a = np.flatnonzero(found)
                b = pos[found]
            if len(a) == 0:
                continue
            ca, cb = self.counts[a], self.counts[b]
            tot = ca * cb
            total = int(tot.sum())
            if total == 0:
                continue
            blk = np.repeat(np.arange(len(a)), tot)
            first = np.cumsum(tot) - tot
            t = np.arange(total) - first[blk]
            cbr = cb[blk]
            ii = self.order[self.starts[a][blk] + t // cbr]
            jj = self.order[self.starts[b][blk] + t % cbr]
            if same:
                keep = ii < jj
                ii, jj = ii[keep], jj[keep]
            dist = np.linalg.norm(self.points[ii] - self.points[jj], axis=1)
            keep = dist <= radius
            out_i.append(ii[keep])
            out_j.append(jj[keep])
            out_d.append(dist[keep])
        if not out_i:
            return empty
        i = np.concatenate(out_i)
        j = np.concatenate(out_j)
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        return lo, hi, np.concatenate(out_d)


def _mean_spacing(points: np.ndarray) -> float:
    n, d = points.shape
    if n < 2:
        return 1.0
    ext = points.max(axis=0) - points.min(axis=0)
    big = ext.max()
    if big <= 0:
        return 1.0
    ext = np.maximum(ext, big / n)
    return float((np.prod(ext) / n) ** (1.0 / d))


def close_pairs(points: np.ndarray, radius: float):
    """All pairs within ``radius`` using a grid of matching cell size."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    h = max(radius, _mean_spacing(points) * 1e-3, 1e-300)
    return GridIndex(points, h).pairs(radius)


def reach_pairs(points: np.ndarray, reach: np.ndarray):
    """Unordered pairs with ``|p_i - p_j| <= max(reach_i, reach_j)``.

    Most points share a modest reach; the long-reach tail is handled by
    individual ball queries so the bulk stays vectorized.
    """
    points = np.asarray(points, dtype=float)
    reach = np.asarray(reach, dtype=float)
    n = len(points)
    if n < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    fin = reach[np.isfinite(reach)]
    if len(fin) < n:
        # unbounded reach: every pair
        i, j = np.triu_indices(n, 1)
        return i, j, np.linalg.norm(points[i] - points[j], axis=1)
    r0 = float(np.quantile(reach, 0.98)) if n > 50 else float(reach.max())
    r0 = max(r0, 0.0)
    i, j, dist = close_pairs(points, r0)
    keep = dist <= np.maximum(reach[i], reach[j])
    i, j, dist = i[keep], j[keep], dist[keep]
    far = np.flatnonzero(reach > r0)
    if len(far):
        grid = GridIndex(points, max(r0, _mean_spacing(points)))
        extra_i, extra_j = [], []
        for k in far:
            nb = grid.query(points[k], reach[k])
            nb = nb[nb != k]
            # pairs already present were within r0
            dk = np.linalg.norm(points[nb] - points[k], axis=1)
            nb = nb[dk > r0]
            extra_i.append(np.full(len(nb), k))
            extra_j.append(nb)
        ei = np.concatenate(extra_i)
        ej = np.concatenate(extra_j)
        lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
        code = np.unique(lo * n + hi)
        lo, hi = code // n, code % n
        dd = np.linalg.norm(points[lo] - points[hi], axis=1)
        i = np.concatenate([i, lo])
        j = np.concatenate([j, hi])
        dist = np.concatenate([dist, dd])
    return i, j, dist


def nearest_distances(points: np.ndarray) -> np.ndarray:
    """Nearest-neighbour distance of every point (``inf`` for a lone point)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    out = np.full(n, np.inf)
    if n < 2:
        return out
    h = 1.5 * _mean_spacing(points)
    i, j, dist = close_pairs(points, h)
    np.minimum.at(out, i, dist)
    np.minimum.at(out, j, dist)
    todo = np.flatnonzero(~(out <= h))
    if len(todo):
        grid = GridIndex(points, h)
        for k in todo:
            r = 2 * h
            while True:
                nb = grid.query(points[k], r)
                nb = nb[nb != k]
                if len(nb):
                    out[k] = np.linalg.norm(points[nb] - points[k], axis=1).min()
                    break
                r *= 2
    return out


class Config:
    """A finite set of distinct points in ``d``-space.

    Immutable after construction; derived structures (nearest-neighbour
    distances, grid) are cached.

    Args:
        points: array-like of shape ``(n, d)``.
        dim: required when ``points`` is empty.
        check: validate distinctness (skip only for subsets of a valid config).
    """

    def __init__(self, points, dim: int | None = None, check: bool = True):
        arr = np.asarray(points, dtype=float)
        if arr.size == 0:
            if dim is None:
                dim = arr.shape[1] if arr.ndim == 2 else None
            if dim is None:
                raise GeometryError("dimension required for an empty configuration")
            arr = np.zeros((0, dim))
        elif arr.ndim == 1:
            if dim is None or dim == 1:
                arr = arr.reshape(-1, 1)
            else:
                arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise GeometryError(f"points must be a 2-d array, got shape {arr.shape}")
        if dim is not None and arr.shape[1] != dim:
            raise GeometryError(f"expected dimension {dim}, got {arr.shape[1]}")
        d = arr.shape[1]
        if not 1 <= d <= MAX_DIM:
            raise GeometryError(f"dimension {d} outside the supported range 1..{MAX_DIM}")
        if not np.all(np.isfinite(arr)):
            raise GeometryError("non-finite coordinates")
        self._points = arr.copy()
        self._points.setflags(write=False)
        self._nn = None
        self._grid = None
        if check and len(arr) > 1:
            nn = self.nn_distances
            thr = self.duplicate_threshold()
            bad = np.flatnonzero(nn <= thr)
            if len(bad):
                raise GeometryError(
                    f"points {bad[:2].tolist()} coincide within {thr:.3g} (distance {nn[bad[0]]:.3g})"
                )

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self):
        return self._points.shape[0]

    def __iter__(self):
        return iter(self._points)

    def __getitem__(self, k):
        return self._points[k]

    def __repr__(self):
        return f"Config(n={len(self)}, d={self.dim})"

    def duplicate_threshold(self) -> float:
        big = float(np.abs(self._points).max()) if len(self) else 0.0
        return tolerance.EPS_GEO * (1.0 + big)

    @property
    def nn_distances(self) -> np.ndarray:
        if self._nn is None:
            self._nn = nearest_distances(self._points)
            self._nn.setflags(write=False)
        return self._nn

    @property
    def grid(self) -> GridIndex:
        if self._grid is None:
            self._grid = GridIndex(self._points)
        return self._grid

    def ball_indices(self, center, radius: float, open: bool = False) -> np.ndarray:
        return self.grid.query(center, radius, open)

    def subset(self, idx) -> "Config":
        return Config(self._points[np.asarray(idx, dtype=np.int64)], dim=self.dim, check=False)

    def restrict(self, center, radius: float, open: bool = False) -> "Config":
        return self.subset(self.ball_indices(center, radius, open))

    def translate(self, v) -> "Config":
        return Config(self._points + as_point(v, self.dim), dim=self.dim, check=False)

    def index_of(self, x) -> int:
        """Index of the point equal to ``x`` (within tolerance); ``-1`` if absent."""
        x = as_point(x, self.dim)
        if len(self) == 0:
            return -1
        dist = np.linalg.norm(self._points - x, axis=1)
        k = int(np.argmin(dist))
        thr = tolerance.EPS_GEO * (1.0 + max(float(np.abs(x).max()), float(np.abs(self._points[k]).max())))
        return k if dist[k] <= thr else -1

    def __contains__(self, x) -> bool:
        return self.index_of(x) >= 0

    def same_points(self, other: "Config") -> bool:
        if len(self) != len(other) or self.dim != other.dim:
            return False
        a = self._points[np.lexsort(self._points.T[::-1])]
        b = other._points[np.lexsort(other._points.T[::-1])]
        return bool(np.allclose(a, b, rtol=0, atol=tolerance.EPS_GEO))


def nn_distance(x, phi: Config) -> float:
    """Distance from ``x`` (a point of ``phi``) to the rest of ``phi``."""
    k = phi.index_of(x)
    if k < 0:
        raise GeometryError(f"{x} is not a point of the configuration")
    return float(phi.nn_distances[k])


def range_query(phi: Config, center, radius: float, open: bool = False) -> Config:
    if radius < 0:
        raise GeometryError("negative radius")
    return phi.restrict(center, radius, open)


@dataclass(frozen=True)
class Window:
    """The scaled window ``W_n = n^{1/d} W`` for a unit-volume body ``W``.

    ``W`` is the centred cube of side 1 or the centred ball of volume 1.
    """

    shape: str
    scale: float
    dim: int

    def __post_init__(self):
        if self.shape not in ("cube", "ball"):
            raise GeometryError(f"unknown window shape {self.shape!r}")
        if not self.scale > 0:
            raise GeometryError(f"window scale must be positive, got {self.scale}")
        if not 1 <= self.dim <= MAX_DIM:
            raise GeometryError(f"dimension {self.dim} outside 1..{MAX_DIM}")

    @classmethod
    def ball_of_radius(cls, radius: float, dim: int) -> "Window":
        return cls("ball", ball_volume(dim, radius), dim)

    @classmethod
    def cube_of_side(cls, side: float, dim: int) -> "Window":
        return cls("cube", side**dim, dim)

    @property
    def volume(self) -> float:
        return float(self.scale)

    @property
    def size(self) -> float:
        """Cube side, or ball radius."""
        lin = self.scale ** (1.0 / self.dim)
        if self.shape == "cube":
            return lin
        return lin * ball_volume(self.dim) ** (-1.0 / self.dim)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = self.size
        if self.shape == "cube":
            return np.all(np.abs(pts) <= s / 2, axis=1)
        return np.linalg.norm(pts, axis=1) <= s

    def distance(self, pts) -> np.ndarray:
        """Euclidean distance from each point to the window (0 inside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = self.size
        if self.shape == "cube":
            ex = np.maximum(np.abs(pts) - s / 2, 0.0)
            return np.linalg.norm(ex, axis=1)
        return np.maximum(np.linalg.norm(pts, axis=1) - s, 0.0)
