"""Clusters of the grain system, the enhanced union set and the CLT functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import tolerance
from .geometry import Config, GeometryError, Window, as_point, ball_volume, reach_pairs
from .model import InfiniteRadiusError, RadiiAssignment, solve
from .sampling import add_point
from .stabilization import external_radius


def _radii(rho) -> np.ndarray:
    return np.asarray(rho.radii if isinstance(rho, RadiiAssignment) else rho, dtype=float)


def contact_pairs(phi: Config, rho, delta: float = 0.0):
    """Pairs ``(i, j)`` whose ``delta``-inflated grains meet."""
    radii = _radii(rho)
    if not np.all(np.isfinite(radii)):
        raise InfiniteRadiusError("components need finite radii")
    reach = 2.0 * radii + 2.0 * delta
    reach = reach + tolerance.tol(reach)
    i, j, dist = reach_pairs(phi.points, reach)
    lim = radii[i] + radii[j] + 2.0 * delta
    keep = dist <= lim + tolerance.tol(lim)
    return i[keep], j[keep]


def _label(n: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    m = coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    _, labels = connected_components(m, directed=False)
    # relabel by first occurrence so ids are deterministic
    _, first = np.unique(labels, return_index=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[labels]


def components(phi: Config, rho, delta: float = 0.0) -> np.ndarray:
    """Component label of each point in ``Z^delta`` (``Z`` when ``delta = 0``)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    i, j = contact_pairs(phi, rho, delta)
    return _label(len(phi), i, j)


def groups(labels: np.ndarray) -> list:
    """Index arrays of each component, in label order."""
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(labels.max() + 2 if len(labels) else 1))
    return [order[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass
class ClusterStats:
    members: np.ndarray
    points: np.ndarray
    cardinality: int
    diameter: float
    volume: float
    component_id: int

    def record(self) -> dict:
        return {
            "id": int(self.component_id),
            "cardinality": int(self.cardinality),
            "diameter": float(self.diameter),
            "volume": float(self.volume),
        }


def union_diameter(points: np.ndarray, radii: np.ndarray, block: int = 2048) -> float:
    """Diameter of a union of closed balls."""
    best = float(2.0 * radii.max()) if len(radii) else 0.0
    for a in range(0, len(points), block):
        pa, ra = points[a : a + block], radii[a : a + block]
        dist = np.linalg.norm(pa[:, None, :] - points[None, :, :], axis=2)
        best = max(best, float((dist + ra[:, None] + radii[None, :]).max()))
    return best


def _stats(phi: Config, radii: np.ndarray, idx: np.ndarray, cid: int) -> ClusterStats:
    r = radii[idx]
    if not np.all(np.isfinite(r)):
        raise InfiniteRadiusError("cluster statistics need finite radii")
    pts = phi.points[idx]
    vol = float(ball_volume(phi.dim) * np.sum(r**phi.dim))
    return ClusterStats(idx, pts, len(idx), union_diameter(pts, r), vol, cid)


def cluster_stats(x, phi: Config, rho, labels: np.ndarray | None = None) -> ClusterStats:
    """Statistics of the cluster ``C(x, phi)`` and its grain union."""
    k = phi.index_of(as_point(x, phi.dim))
    if k < 0:
        raise GeometryError(f"{x} is not a point of the configuration")
    radii = _radii(rho)
    if labels is None:
        labels = components(phi, radii)
    idx = np.flatnonzero(labels == labels[k])
    return _stats(phi, radii, idx, int(labels[k]))


def all_cluster_stats(phi: Config, rho, delta: float = 0.0) -> list:
    radii = _radii(rho)
    labels = components(phi, radii, delta)
    return [_stats(phi, radii, idx, c) for c, idx in enumerate(groups(labels))] if len(phi) else []


def kappa(phi: Config, rho=None) -> int:
    """Number of clusters; 0 for the empty and 1 for a one-point configuration."""
    if len(phi) <= 1:
        return len(phi)
    if rho is None:
        rho = solve(phi)
    labels = components(phi, rho)
    return int(labels.max()) + 1


def H_g(phi: Config, rho, g) -> float:
    """``sum g(rho(x))`` over the configuration; 0 when it has at most one point."""
    if len(phi) <= 1:
        return 0.0
    if rho is None:
        rho = solve(phi)
    vals = np.asarray(g(_radii(rho)), dtype=float)
    if vals.shape == ():
        vals = np.full(len(phi), float(vals))
    return float(vals.sum())


def volume_g(d: int):
    """``g(t) = b_d t^d``, for which ``H_g`` is the covered volume."""
    b = ball_volume(d)
    return lambda t: b * np.asarray(t, dtype=float) ** d


def _resolve_r(phi: Config, r_cap: int, r: float | None):
    if r is not None:
        return float(r)
    rex = external_radius(phi, r_cap)
    return None if math.isinf(rex) else rex / 9.0


def add_one_cost_g(phi: Config, g, r_cap: int = 64, r: float | None = None) -> float | None:
    """``Delta_g(phi)``; ``None`` when ``Rex(phi)`` is infinite within the cap.

    Passing ``r`` skips the ``Rex`` search and evaluates the sums at that
    radius directly.
    """
    r = _resolve_r(phi, r_cap, r)
    if r is None:
        return None
    zero = np.zeros(phi.dim)
    phi0 = add_point(phi, zero)
    total = 0.0
    for cfg, sign in ((phi0, 1.0), (phi, -1.0)):
        idx = cfg.ball_indices(zero, 2 * r)
        if len(idx) == 0 or len(cfg) <= 1:
            continue
        rad = solve(cfg).radii[idx]
        vals = np.asarray(g(rad), dtype=float)
        if vals.shape == ():
            vals = np.full(len(idx), float(vals))
        total += sign * float(vals.sum())
    return total


def _induced_count(phi: Config, rho, subset: np.ndarray) -> int:
    if len(subset) == 0:
        return 0
    if len(phi) == 1:
        return 1
    i, j = contact_pairs(phi, rho)
    mask = np.zeros(len(phi), dtype=bool)
    mask[subset] = True
    keep = mask[i] & mask[j]
    pos = np.full(len(phi), -1)
    pos[subset] = np.arange(len(subset))
    labels = _label(len(subset), pos[i[keep]], pos[j[keep]])
    return int(labels.max()) + 1


def add_one_cost_kappa(phi: Config, r_cap: int = 64, r: float | None = None) -> int | None:
    """``Delta_kappa(phi) = N_0 - N``; ``None`` when ``Rex(phi)`` is infinite within the cap."""
    r = _resolve_r(phi, r_cap, r)
    if r is None:
        return None
    zero = np.zeros(phi.dim)
    phi0 = add_point(phi, zero)
    near = phi.ball_indices(zero, 3 * r)
    if len(near) and len(phi) > 1:
        rho = solve(phi)
        labels = components(phi, rho)
        star = np.flatnonzero(np.isin(labels, labels[near]))
        n_phi = _induced_count(phi, rho, star)
    elif len(near):
        star, n_phi = near, 1
    else:
        star, n_phi = np.zeros(0, dtype=np.int64), 0
    # phi0 keeps phi's indices and appends the origin last
    sub0 = np.append(star, len(phi))
    n0 = _induced_count(phi0, solve(phi0), sub0)
    return n0 - n_phi


def crossing(phi: Config, rho, delta: float, x, r: float) -> bool:
    """Some component of ``Z^delta`` meets both ``B_r(x)`` and the outside of ``B_{7r}(x)``."""
    if delta < 0 or not r > 0:
        raise ValueError("need delta >= 0 and r > 0")
    if len(phi) == 0:
        return False
    x = as_point(x, phi.dim)
    radii = _radii(rho)
    if len(phi) == 1:
        return True
    labels = components(phi, radii, delta)
    dist = np.linalg.norm(phi.points - x, axis=1)
    inner = dist <= r + radii + delta
    outer = dist + radii + delta > 7 * r
    return bool(np.intersect1d(labels[inner], labels[outer]).size)


def face_crossing(phi: Config, rho, delta: float, window: Window, axis: int = 0) -> bool:
    """Some component of ``Z^delta`` touches both faces of the cube normal to ``axis``."""
    if window.shape != "cube":
        raise GeometryError("face crossing is defined for cube windows only")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if not 0 <= axis < window.dim:
        raise ValueError(f"axis {axis} out of range")
    if len(phi) == 0:
        return False
    radii = _radii(rho)
    if len(phi) == 1:
        return bool(2 * (radii[0] + delta) >= window.size)
    half = window.size / 2.0
    c = phi.points[:, axis]
    labels = components(phi, radii, delta)
    lo = c - radii - delta <= -half
    hi = c + radii + delta >= half
    return bool(np.intersect1d(labels[lo], labels[hi]).size)
