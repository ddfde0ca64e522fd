"""Descending chains, stopping sets, fences and the external-stabilization events.

The chain-ball family ``A(y, phi)`` is computed by max-link propagation.  A
chain can leave a point ``v`` along any link no longer than the link it
arrived by, so only the longest arriving link ``L(v)`` matters: the set of
balls is ``{(v, L(v))}`` with ``L`` the bottleneck-widest chain value,
found Dijkstra style with a max-heap.  Repeated points along a chain can be
shortcut to a distinct chain whose terminal ball is at least as large, so
dropping the distinctness requirement does not change the union.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri

from . import tolerance
from .geometry import Config, GeometryError, GridIndex, Window, as_point, reach_pairs
from .model import RadiiAssignment, neighbour_graph, solve


def is_descending_chain(seq, phi: Config) -> bool:
    pts = [as_point(p, phi.dim) for p in seq]
    if len(pts) < 2:
        raise ValueError("a descending chain needs at least two points")
    idx = [phi.index_of(p) for p in pts]
    if min(idx) < 0 or len(set(idx)) != len(idx):
        return False
    links = [float(np.linalg.norm(pts[i + 1] - pts[i])) for i in range(len(pts) - 1)]
    return all(links[i + 1] <= links[i] for i in range(len(links) - 1))


@dataclass
class StoppingSet:
    """``S(y, phi)``: the base ball ``B_{2D}(y)`` plus the chain balls."""

    anchor: np.ndarray
    base_radius: float
    centers: np.ndarray
    radii: np.ndarray
    whole_space: bool = False

    @property
    def bounded(self) -> bool:
        return not self.whole_space

    @property
    def enclosing_radius(self) -> float:
        if self.whole_space:
            return math.inf
        if len(self.radii) == 0:
            return self.base_radius
        far = np.linalg.norm(self.centers - self.anchor, axis=1) + self.radii
        return max(self.base_radius, float(far.max()))

    def balls(self) -> list:
        out = [(self.anchor.tolist(), self.base_radius)]
        out += [(c.tolist(), float(r)) for c, r in zip(self.centers, self.radii)]
        return out

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.whole_space:
            return np.ones(len(pts), dtype=bool)
        centers = np.vstack([self.anchor[None, :], self.centers])
        radii = np.concatenate([[self.base_radius], self.radii])
        return _in_balls(pts, centers, radii)

    def contained_in_ball(self, center, radius: float, open: bool = True) -> bool:
        if self.whole_space:
            return False
        c = as_point(center, len(self.anchor))
        far = [np.linalg.norm(self.anchor - c) + self.base_radius]
        if len(self.radii):
            far.append(float((np.linalg.norm(self.centers - c, axis=1) + self.radii).max()))
        m = max(far)
        return m < radius if open else m <= radius


def _in_balls(pts: np.ndarray, centers: np.ndarray, radii: np.ndarray, block: int = 1 << 22) -> np.ndarray:
    """Membership of each point in a union of closed balls."""
    out = np.zeros(len(pts), dtype=bool)
    if len(pts) == 0 or len(radii) == 0:
        return out
    step = max(1, block // len(radii))
    for a in range(0, len(pts), step):
        p = pts[a : a + step]
        d2 = ((p[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[a : a + step] = np.any(np.sqrt(d2) <= radii[None, :], axis=1)
    return out


class ChainLinks:
    """Per-point neighbour lists within ``reach``, nearest first.

    Every link of a chain anchored at ``y`` is at most ``2 D(y)``, so lists
    built with ``reach >= 2 D(y)`` serve all chains from ``y``.
    """

    def __init__(self, phi: Config, reach: float):
        self.phi = phi
        self.reach = float(reach)
        pts = phi.points
        n = len(pts)
        lim = self.reach + tolerance.tol(self.reach)
        if n < 2:
            self.lists = [([], [])] * n
            return
        i, j, dist = GridIndex(pts).pairs(lim)
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
        dd = np.concatenate([dist, dist])
        order = np.lexsort((dd, src))
        src, dst, dd = src[order], dst[order], dd[order]
        bounds = np.searchsorted(src, np.arange(n + 1)).tolist()
        dst_l, dd_l = dst.tolist(), dd.tolist()
        self.lists = [(dst_l[a:b], dd_l[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]

    @classmethod
    def for_anchors(cls, phi: Config, idx) -> "ChainLinks":
        idx = np.asarray(idx, dtype=np.int64)
        reach = float(2.0 * phi.nn_distances[idx].max()) if len(idx) and len(phi) > 1 else 0.0
        return cls(phi, reach)


def _propagate(links: ChainLinks, k: int, starts, far, bound: float):
    """Bottleneck propagation of chain links.

    ``starts`` are ``(index, |x - y|)`` pairs and ``k`` the anchor's index
    (``-1`` if the anchor is not a point).  Returns ``{v: L(v)}``, or
    ``None`` as soon as some ball has ``far(v) + L(v) >= bound``.
    """
    best = {}
    heap = []
    for v, length in starts:
        if length > best.get(v, -1.0):
            best[v] = length
            heap.append((-length, v))
    heapq.heapify(heap)
    done = set()
    lists = links.lists
    while heap:
        negl, v = heapq.heappop(heap)
        lv = -negl
        if v in done or lv != best[v]:
            continue
        done.add(v)
        if far(v) + lv >= bound:
            return None
        lim = lv + tolerance.tol(lv)
        nbr, dist = lists[v]
        for w, dw in zip(nbr, dist):
            if dw > lim:
                break
            if w == k or w in done:
                continue
            if dw > best.get(w, -1.0):
                best[w] = dw
                heapq.heappush(heap, (-dw, w))
    return best


def _anchor_starts(phi: Config, links: ChainLinks, y: np.ndarray, k: int, dist_y: float) -> list:
    lim = 2.0 * dist_y
    lim += tolerance.tol(lim)
    if k >= 0:
        starts = []
        nbr, dist = links.lists[k]
        for w, dw in zip(nbr, dist):
            if dw > lim:
                break
            starts.append((w, dw))
        return starts
    near = phi.ball_indices(y, lim)
    dy = np.linalg.norm(phi.points[near] - y, axis=1)
    return list(zip(near.tolist(), dy.tolist()))


def _anchor(phi: Config, y):
    y = as_point(y, phi.dim)
    k = phi.index_of(y)
    if len(phi) - (1 if k >= 0 else 0) == 0:
        return y, k, math.inf
    if k >= 0:
        return y, k, float(phi.nn_distances[k])
    return y, k, float(np.linalg.norm(phi.points - y, axis=1).min())


def stopping_set(y, phi: Config, links: ChainLinks | None = None) -> StoppingSet:
    """``S(y, phi)``; ``y`` need not belong to ``phi``.

    ``links`` may be shared between calls; it must reach ``2 D(y, phi^y)``.
    """
    return _stopping_set(phi, *_anchor(phi, y), links)


def _stopping_set(phi: Config, y: np.ndarray, k: int, dist_y: float, links) -> StoppingSet:
    if math.isinf(dist_y):
        return StoppingSet(y, math.inf, np.zeros((0, phi.dim)), np.zeros(0), whole_space=True)
    if links is None or links.reach < 2.0 * dist_y:
        links = ChainLinks(phi, 2.0 * dist_y)
    starts = _anchor_starts(phi, links, y, k, dist_y)
    best = _propagate(links, k, starts, lambda v: 0.0, math.inf)
    order = sorted(best)
    centers = phi.points[order] if order else np.zeros((0, phi.dim))
    return StoppingSet(y.copy(), 2.0 * dist_y, centers, np.array([best[v] for v in order], dtype=float))


def _within(phi: Config, y: np.ndarray, k: int, dist_y: float, c: np.ndarray, radius: float, links):
    if math.isinf(dist_y):
        return False
    if float(np.linalg.norm(y - c)) + 2.0 * dist_y >= radius:
        return False
    if links is None or links.reach < 2.0 * dist_y:
        links = ChainLinks(phi, 2.0 * dist_y)
    pts = phi.points
    starts = _anchor_starts(phi, links, y, k, dist_y)

    def far(v):
        return float(np.sqrt(((pts[v] - c) ** 2).sum()))

    return _propagate(links, k, starts, far, radius) is not None


def stopping_set_within(y, phi: Config, center, radius: float, links: ChainLinks | None = None) -> bool:
    """Whether ``S(y, phi)`` lies in the open ball ``B_radius(center)``; stops early."""
    y, k, dist_y = _anchor(phi, y)
    return _within(phi, y, k, dist_y, as_point(center, phi.dim), radius, links)


def point_within(phi: Config, k: int, center, radius: float, links: ChainLinks | None = None) -> bool:
    """:func:`stopping_set_within` for the anchor ``phi.points[k]``."""
    dist_y = float(phi.nn_distances[k]) if len(phi) > 1 else math.inf
    return _within(phi, phi.points[k], k, dist_y, as_point(center, phi.dim), radius, links)


def stab_radius(phi: Config) -> float:
    """``R(phi)``: enclosing radius of ``S(0, phi)``."""
    if len(phi) == 0:
        return math.inf
    return stopping_set(np.zeros(phi.dim), phi).enclosing_radius


# ---------------------------------------------------------------- fences


class FenceError(RuntimeError):
    """A fence cover could not be certified within the iteration budget."""


def _roberts_alpha(d: int) -> np.ndarray:
    g = 2.0
    for _ in range(64):
        g = (1.0 + g) ** (1.0 / (d + 1))
    return (1.0 / g) ** np.arange(1, d + 1)


def sphere_sequence(d: int, start: int, count: int) -> np.ndarray:
    """Terms ``start .. start+count-1`` of the fixed dense sequence on the unit sphere."""
    j = np.arange(start, start + count, dtype=float)
    if d == 1:
        return np.where(j % 2 == 0, 1.0, -1.0)[:, None]
    if d == 2:
        golden = math.pi * (3.0 - math.sqrt(5.0))
        th = (j * golden) % (2.0 * math.pi)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    u = (0.5 + (j[:, None] + 1.0) * _roberts_alpha(d)[None, :]) % 1.0
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _arc_components(th: np.ndarray, alpha: float):
    """Sorted centres and cyclic gaps of a set of arc centres."""
    th = np.sort(th)
    gaps = np.diff(np.append(th, th[0] + 2 * math.pi))
    return th, gaps


def _cover_circle(q: float, budget: int):
    alpha = 2.0 * math.asin(q / 2.0)
    margin = 1e-9
    chosen = []
    for j in range(0, budget, 256):
        for e in sphere_sequence(2, j, 256):
            th = math.atan2(e[1], e[0]) % (2 * math.pi)
            if chosen:
                cs, gaps = _arc_components(np.array(chosen), alpha)
                if np.all(gaps < 2 * alpha - margin):
                    return np.array(chosen), True
                if _arc_inside_union(th, alpha, cs, gaps, margin):
                    continue
            chosen.append(th)
    return np.array(chosen), False


def _arc_inside_union(th, alpha, cs, gaps, margin) -> bool:
    """Whether the open arc of half-width ``alpha`` at ``th`` is covered."""
    k = len(cs)
    merged = gaps < 2 * alpha - margin
    if np.all(merged):
        return True
    # components as [start, end] angular intervals (unwrapped)
    breaks = np.flatnonzero(~merged)
    for b_i, b in enumerate(breaks):
        nb = breaks[(b_i + 1) % len(breaks)]
        first = (b + 1) % k
        span = (cs[nb] - cs[first]) % (2 * math.pi)
        a0 = cs[first] - alpha
        a1 = a0 + span + 2 * alpha
        rel = (th - a0) % (2 * math.pi)
        if rel - alpha >= margin and rel + alpha <= (a1 - a0) - margin:
            return True
    return False


def _certify_patches(pts: np.ndarray, q: float, d: int, min_w: float) -> bool:
    """Certify that open chordal balls of radius ``q`` at ``pts`` cover the sphere.

    Faces of the cube ``[-1, 1]^d`` are split into patches; radial
    projection is 1-Lipschitz on the cube surface, so a patch with centre
    ``c`` and half-diagonal ``w`` is covered when some cover point lies
    within ``q - w`` of ``c / |c|``.
    """
    tree = cKDTree(pts)
    m = d - 1
    n0 = max(1, int(math.ceil(2.0 / q)))
    h = 2.0 / n0
    grid1 = -1.0 + h * (np.arange(n0) + 0.5)
    base = np.stack(np.meshgrid(*([grid1] * m), indexing="ij"), axis=-1).reshape(-1, m)
    offsets = np.array(np.meshgrid(*([[-0.25, 0.25]] * m), indexing="ij")).reshape(m, -1).T
    for axis in range(d):
        for sign in (-1.0, 1.0):
            cen = base.copy()
            side = h
            while len(cen):
                w = 0.5 * side * math.sqrt(m)
                full = np.insert(cen, axis, sign, axis=1)
                full /= np.linalg.norm(full, axis=1, keepdims=True)
                dist, _ = tree.query(full)
                bad = dist + w >= q * (1.0 - 1e-12)
                cen = cen[bad]
                if not len(cen):
                    break
                if w < min_w:
                    return False
                cen = (cen[:, None, :] + side * offsets[None, :, :]).reshape(-1, m)
                side *= 0.5
                if len(cen) > 4_000_000:
                    return False
    return True


def _cover_sphere(d: int, q: float, budget: int):
    sep = 0.85 * q
    chosen = np.zeros((0, d))
    j = 0
    block = 4096
    while j < budget:
        cand = sphere_sequence(d, j, block)
        j += block
        for e in cand:
            if len(chosen) == 0 or np.min(np.linalg.norm(chosen - e, axis=1)) >= sep:
                chosen = np.vstack([chosen, e])
        if len(chosen) and _coverage_hint(chosen, q, d) and _certify_patches(chosen, q, d, 0.02 * q):
            return chosen, True
    return chosen, False


def _coverage_hint(pts, q, d) -> bool:
    probe = sphere_sequence(d, 10_000_019, 2000)
    dist, _ = cKDTree(pts).query(probe)
    return bool(dist.max() < 0.97 * q)


@lru_cache(maxsize=256)
def _unit_cover(d: int, q: float, budget: int):
    if d == 1:
        return np.array([[1.0], [-1.0]]), True
    if d == 2:
        th, ok = _cover_circle(q, budget)
        return np.stack([np.cos(th), np.sin(th)], axis=1), ok
    return _cover_sphere(d, q, budget)


DEFAULT_FENCE_BUDGET = 200_000


@dataclass
class FenceSpec:
    """Cover points of ``dB_s(x)`` for the fence event of width ``width``.

    For a windowed fence the cover uses balls of radius ``width / 2`` and
    ``active`` marks the ``z_i`` whose half-width ball meets the window.
    """

    center: np.ndarray
    s: float
    width: float
    points: np.ndarray
    cover_certified: bool
    window: Window | None = None
    active: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.points)

    @property
    def windowed_points(self) -> np.ndarray:
        return self.points if self.active is None else self.points[self.active]


def fence_cover(x, s: float, r: float, window: Window | None = None, budget: int = DEFAULT_FENCE_BUDGET) -> FenceSpec:
    """Cover points for ``F(x, s, r)``, or for ``F_n(x, s, r)`` when ``window`` is given."""
    if not 0 < r < s:
        raise ValueError(f"fence needs 0 < r < s, got r={r}, s={s}")
    dim = window.dim if window is not None else len(np.atleast_1d(x))
    x = as_point(x, dim)
    half = window is not None
    rad = r / 2.0 if half else r
    unit, ok = _unit_cover(dim, rad / s, budget)
    if not ok:
        raise FenceError(f"cover of the sphere by {len(unit)} caps not certified (d={dim}, r/s={rad / s:.4g})")
    pts = x + s * unit
    active = None
    if half:
        active = window.distance(pts) <= rad
    return FenceSpec(x, float(s), float(r), pts, True, window, active)


def in_fence(phi: Config, fence: FenceSpec) -> bool:
    if not fence.cover_certified:
        raise FenceError("fence cover is not certified")
    if fence.window is not None:
        if len(phi) and not np.all(fence.window.contains(phi.points)):
            return False
        zs = fence.windowed_points
        if len(zs) == 0:
            return True
        if len(phi) < 2:
            return False
        idx = phi.ball_indices(fence.center, fence.s + fence.width)
        cand = phi.points[idx]
        dz = np.linalg.norm(cand[:, None, :] - zs[None, :, :], axis=2)
        return bool(np.all((dz < fence.width).sum(axis=0) >= 2))
    if len(phi) < 2:
        return False
    idx = phi.ball_indices(fence.center, fence.s + fence.width)
    cand = phi.points[idx]
    cand = cand[np.linalg.norm(cand - fence.center, axis=1) > fence.s]
    if len(cand) < 2:
        return False
    dz = np.linalg.norm(cand[:, None, :] - fence.points[None, :, :], axis=2)
    return bool(np.all((dz < fence.width).sum(axis=0) >= 2))


# ------------------------------------------------------- composite events


def in_E_r(phi: Config, x, r: float) -> bool:
    """Every ``y`` in ``phi`` within ``8r`` of ``x`` has ``R(-y + phi) < r``."""
    if not r > 0:
        raise ValueError("r must be positive")
    x = as_point(x, phi.dim)
    ys = phi.ball_indices(x, 8 * r)
    if len(ys) == 0:
        return True
    local_idx = phi.ball_indices(x, 9 * r)
    local = phi.subset(local_idx)
    if len(local) < 2:
        return False
    nn = local.nn_distances
    pos = np.searchsorted(local_idx, ys)
    if np.any(2.0 * nn[pos] >= r):
        return False
    links = ChainLinks.for_anchors(local, pos)
    for k in pos[np.argsort(-nn[pos])].tolist():
        if not point_within(local, k, local.points[k], r, links):
            return False
    return True


def in_U_r(phi: Config, x, r: float) -> bool:
    """``phi`` restricted to ``B_{9r}(x)`` has unique smaller grain-neighbours."""
    if not r > 0:
        raise ValueError("r must be positive")
    local = phi.restrict(as_point(x, phi.dim), 9 * r)
    if len(local) <= 2:
        return True
    g = neighbour_graph(local, solve(local))
    return bool(np.all(g.out_degree() == 1))


def g_fences(x, r: float, dim: int, window: Window | None = None) -> list:
    x = as_point(x, dim)
    return [fence_cover(x, j * r, r / 2.0, window) for j in range(1, 9)]


def in_G(phi: Config, x, r: float, windowed: bool = False, window: Window | None = None) -> bool:
    """``G_r(x)`` (or ``G_{n,r}(x)`` with a window)."""
    if not r > 0:
        raise ValueError("r must be positive")
    if windowed and window is None:
        raise ValueError("windowed event needs a window")
    x = as_point(x, phi.dim)
    for fence in g_fences(x, r, phi.dim, window if windowed else None):
        if not in_fence(phi, fence):
            return False
    return in_U_r(phi, x, r) and in_E_r(phi, x, r)


def external_radius(phi: Config, r_cap: int = 64) -> float:
    """``Rex(phi) = 9 min{r in 1..r_cap : phi in G_r(0)}`` or ``+inf``."""
    if r_cap < 1:
        raise ValueError("r_cap must be >= 1")
    zero = np.zeros(phi.dim)
    for r in range(1, int(r_cap) + 1):
        if in_G(phi, zero, float(r)):
            return 9.0 * r
    return math.inf


def min_gap(x, phi: Config, rho, r: float) -> float:
    """Smallest positive gap between grains centred in ``B_{8r}(x)``.

    ``rho`` is a :class:`RadiiAssignment` or an array of radii.
    """
    x = as_point(x, phi.dim)
    idx = phi.ball_indices(x, 8 * r)
    if len(idx) < 2:
        return math.inf
    radii = np.asarray(getattr(rho, "radii", rho), dtype=float)[idx]
    if not np.all(np.isfinite(radii)):
        raise GeometryError("min_gap needs finite radii")
    pts = phi.points[idx]
    rmax = float(radii.max())
    t = max(float(np.median(phi.nn_distances[idx])), 1e-6)
    span = 16 * r + 2 * rmax
    while True:
        i, j, dist = reach_pairs(pts, radii + rmax + t)
        gap = dist - radii[i] - radii[j]
        gap = gap[gap > tolerance.tol(1.0) * (1.0 + dist)]
        if len(gap) and gap.min() <= t:
            return float(gap.min())
        if t > span:
            return float(gap.min()) if len(gap) else math.inf
        t *= 2.0


@dataclass
class StoppingSetUnion:
    """Union of ``S(y, phi)`` over the anchors ``y``.

    Held as the anchors' base balls plus one chain ball per point, with the
    largest radius any anchor's chains give it (balls with a common centre
    are nested, so the union is unchanged).
    """

    anchors: np.ndarray
    base_radii: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    whole_space: bool = False

    @property
    def bounded(self) -> bool:
        return not self.whole_space

    @property
    def empty(self) -> bool:
        return len(self.anchors) == 0

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.whole_space:
            return np.ones(len(pts), dtype=bool)
        return _in_balls(pts, np.vstack([self.anchors, self.centers]), np.concatenate([self.base_radii, self.radii]))

    def balls(self) -> list:
        out = [(c.tolist(), float(r)) for c, r in zip(self.anchors, self.base_radii)]
        return out + [(c.tolist(), float(r)) for c, r in zip(self.centers, self.radii)]


def stopping_set_union(phi: Config, idx) -> StoppingSetUnion:
    """Union of ``S(x, phi)`` over ``x = phi[idx]`` in one propagation.

    Chains from different anchors share transitions, so the largest last link
    reaching each point is the maximum over anchors.  Chains may pass through
    anchors; any such chain shortcuts to one that does not.
    """
    idx = np.asarray(idx, dtype=np.int64)
    d = phi.dim
    if len(idx) == 0:
        z = np.zeros((0, d))
        return StoppingSetUnion(z, np.zeros(0), z, np.zeros(0))
    if len(phi) < 2:
        return StoppingSetUnion(phi.points[idx], np.full(len(idx), math.inf), np.zeros((0, d)), np.zeros(0), whole_space=True)
    nn = phi.nn_distances
    links = ChainLinks.for_anchors(phi, idx)
    starts = []
    for k in idx.tolist():
        starts += _anchor_starts(phi, links, phi.points[k], k, float(nn[k]))
    best = _propagate(links, -1, starts, lambda v: 0.0, math.inf)
    order = sorted(best)
    centers = phi.points[order] if order else np.zeros((0, d))
    return StoppingSetUnion(phi.points[idx], 2.0 * nn[idx], centers, np.array([best[v] for v in order], dtype=float))


def s_star(phi: Config, r: float) -> StoppingSetUnion:
    """Union of ``S(x, phi)`` over points with ``2r < |x| <= 7r``."""
    if not r > 0:
        raise ValueError("r must be positive")
    zero = np.zeros(phi.dim)
    idx = phi.ball_indices(zero, 7 * r)
    norms = np.linalg.norm(phi.points[idx], axis=1)
    return stopping_set_union(phi, idx[norms > 2 * r])
