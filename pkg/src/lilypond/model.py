"""Exact lilypond radii on finite configurations.

All balls grow at unit rate from time zero and each stops on first contact.
The solver is event driven: every growing ball ``x`` carries a tentative
stop time

    t(x) = min_y  |x - y| / 2        (y growing)
                  |x - y| - rho(y)   (y frozen)

and the global minimiser is frozen repeatedly.  A ball freezes no later than
its nearest-neighbour distance ``D(x)`` and its freezing witness ``y`` froze
no later than ``x``, so ``|x - y| <= 2 D(x)``: only neighbours within
``2 D(x)`` are ever relevant.  Freezing a neighbour can only raise the
contributions of the others, so stale heap entries are skipped on pop.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import tolerance
from .geometry import Config, GeometryError, reach_pairs


class InfiniteRadiusError(ValueError):
    """An operation needs finite radii but the configuration is a singleton."""


@dataclass
class RadiiAssignment:
    """Lilypond radii aligned with ``config.points``.

    ``trace`` lists freeze batches ``(time, indices)`` in event order.
    """

    config: Config
    radii: np.ndarray
    trace: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.radii)

    def __getitem__(self, k):
        return self.radii[k]

    def radius_of(self, x) -> float:
        k = self.config.index_of(x)
        if k < 0:
            raise GeometryError(f"{x} is not a point of the configuration")
        return float(self.radii[k])

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.radii)))

    def require_finite(self, what: str = "this operation"):
        if not self.finite:
            raise InfiniteRadiusError(
                f"{what} needs finite radii; a single-point configuration has rho = +inf"
            )


def _adjacency(n: int, i: np.ndarray, j: np.ndarray, dist: np.ndarray):
    """Symmetric CSR adjacency as Python lists (indptr, neighbours, distances)."""
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    dd = np.concatenate([dist, dist])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr.tolist(), dst[order].tolist(), dd[order].tolist()


def solve(phi: Config) -> RadiiAssignment:
    """Lilypond radii of ``phi`` (``+inf`` for a single point)."""
    n = len(phi)
    if n == 0:
        raise GeometryError("cannot solve an empty configuration")
    if n == 1:
        return RadiiAssignment(phi, np.array([math.inf]), [(math.inf, (0,))])
    nn = phi.nn_distances
    i, j, dist = reach_pairs(phi.points, 2.0 * nn * (1.0 + 1e-12))
    indptr, nbr, nd = _adjacency(n, i, j, dist)

    growing = [True] * n
    rho = [math.inf] * n
    t = (0.5 * nn).tolist()
    heap = [(t[k], k) for k in range(n)]
    heapq.heapify(heap)
    trace = []
    pop = heapq.heappop
    push = heapq.heappush
    while heap:
        tk, k = pop(heap)
        if not growing[k] or tk != t[k]:
            continue
        batch = [k]
        growing[k] = False
        rho[k] = tk
        # mutually touching pairs freeze together
        for p in range(indptr[k], indptr[k + 1]):
            z = nbr[p]
            if growing[z] and 0.5 * nd[p] == tk:
                growing[z] = False
                rho[z] = tk
                batch.append(z)
        trace.append((tk, tuple(batch)))
        for f in batch:
            rf = rho[f]
            for p in range(indptr[f], indptr[f + 1]):
                z = nbr[p]
                if not growing[z]:
                    continue
                # z's time was pinned by f only if it equalled f's growing contribution
                if t[z] == 0.5 * nd[p]:
                    best = math.inf
                    for q in range(indptr[z], indptr[z + 1]):
                        w = nbr[q]
                        c = 0.5 * nd[q] if growing[w] else nd[q] - rho[w]
                        if c < best:
                            best = c
                    if best != t[z]:
                        t[z] = best
                        push(heap, (best, z))
                else:
                    c = nd[p] - rf
                    if c < t[z]:  # pragma: no cover - contributions only increase
                        t[z] = c
                        push(heap, (c, z))
    return RadiiAssignment(phi, np.array(rho), trace)


@dataclass
class VerifyReport:
    hard_core: bool
    smaller_neighbour: bool
    max_hard_core_excess: float
    worst_pair: tuple | None
    neighbour_residuals: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.hard_core and self.smaller_neighbour


def _candidate_pairs(phi: Config, radii: np.ndarray, extra: float = 0.0):
    """Pairs that can touch or overlap: ``|x-y| <= 2 max(rho_x, rho_y) + extra``."""
    r = np.where(np.isfinite(radii), radii, np.inf)
    reach = 2.0 * r + extra + tolerance.tol(2.0 * np.where(np.isfinite(r), r, 0.0))
    return reach_pairs(phi.points, reach)


def verify(phi: Config, rho) -> VerifyReport:
    """Check the hard-core and smaller-grain-neighbour properties."""
    radii = np.asarray(rho.radii if isinstance(rho, RadiiAssignment) else rho, dtype=float)
    n = len(phi)
    if radii.shape != (n,):
        raise GeometryError(f"expected {n} radii, got shape {radii.shape}")
    if n == 0:
        return VerifyReport(True, True, -math.inf, None, np.zeros(0))
    if n == 1:
        ok = bool(radii[0] == math.inf)
        return VerifyReport(True, ok, -math.inf, None, np.array([0.0 if ok else math.inf]))
    if np.any(radii < 0) or np.any(np.isnan(radii)):
        return VerifyReport(False, False, math.inf, None, np.full(n, math.inf))
    i, j, dist = _candidate_pairs(phi, radii)
    s = radii[i] + radii[j]
    with np.errstate(invalid="ignore"):
        excess = s - dist
    excess = np.where(np.isnan(excess), math.inf, excess)
    if len(excess):
        w = int(np.argmax(excess))
        max_excess = float(excess[w])
        worst = (int(i[w]), int(j[w]))
    else:
        max_excess, worst = -math.inf, None
    hard_core = bool(np.all(excess <= tolerance.tol(1.0) * (1.0 + dist)))
    if not np.all(np.isfinite(radii)):
        hard_core = False
    resid = np.full(n, math.inf)
    with np.errstate(invalid="ignore"):
        gap = np.abs(s - dist)
    gap = np.where(np.isnan(gap), math.inf, gap)
    # y smaller neighbour of x: touching and rho_y <= rho_x
    for a, b in ((i, j), (j, i)):
        ok = radii[b] <= radii[a] + tolerance.tol(radii[a])
        np.minimum.at(resid, a[ok], gap[ok])
    smaller = bool(np.all(resid <= tolerance.tol(1.0) * (1.0 + 2.0 * radii)))
    return VerifyReport(hard_core, smaller, max_excess, worst, resid)


@dataclass
class GrainGraph:
    """Directed smaller-grain-neighbour graph: edge ``(x, y)`` if ``y`` is a
    smaller grain-neighbour of ``x``."""

    n: int
    src: np.ndarray
    dst: np.ndarray

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n)

    def edges(self) -> set:
        return set(zip(self.src.tolist(), self.dst.tolist()))

    def undirected(self) -> set:
        return {(min(a, b), max(a, b)) for a, b in self.edges()}

    def n_components(self) -> int:
        if self.n == 0:
            return 0
        m = coo_matrix((np.ones(len(self.src)), (self.src, self.dst)), shape=(self.n, self.n))
        return int(connected_components(m, directed=True, connection="weak")[0])


def neighbour_graph(phi: Config, rho: RadiiAssignment) -> GrainGraph:
    rho.require_finite("neighbour_graph")
    radii = rho.radii
    i, j, dist = _candidate_pairs(phi, radii)
    touch = np.abs(radii[i] + radii[j] - dist) <= tolerance.tol(1.0) * (1.0 + dist)
    i, j = i[touch], j[touch]
    src, dst = [], []
    for a, b in ((i, j), (j, i)):
        ok = radii[b] <= radii[a] + tolerance.tol(radii[a])
        src.append(a[ok])
        dst.append(b[ok])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    order = np.lexsort((dst, src))
    return GrainGraph(len(phi), src[order], dst[order])


def lex_geq(a, b) -> bool:
    """Tolerant lexicographic ``a >= b`` for equal-length sequences."""
    for x, y in zip(a, b):
        if abs(x - y) <= tolerance.tol(max(abs(x), abs(y)) if math.isfinite(max(abs(x), abs(y))) else 0.0):
            continue
        return x > y
    return True


def maximin_compare(phi: Config, rho: RadiiAssignment, alt) -> bool:
    """Whether the sorted lilypond radii dominate ``alt`` lexicographically.

    ``alt`` must satisfy the hard-core property on ``phi``.
    """
    alt = np.asarray(alt, dtype=float)
    if alt.shape != rho.radii.shape:
        raise GeometryError("alternative radii have the wrong shape")
    if np.any(alt < 0):
        raise ValueError("alternative radii must be nonnegative")
    if len(phi) > 1:
        i, j, dist = _candidate_pairs(phi, alt)
        if np.any(alt[i] + alt[j] > dist + tolerance.tol(1.0) * (1.0 + dist)) or not np.all(np.isfinite(alt)):
            raise ValueError("alternative radii violate the hard-core property")
    return lex_geq(np.sort(rho.radii), np.sort(alt))
