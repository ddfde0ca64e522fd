"""Reproducible Poisson and binomial point processes on windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Config, GeometryError, Window, as_point, ball_volume

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus replicate stream id.

    Draws come from a Philox counter-based generator keyed by
    ``(master, stream)``; ``substream`` selects a disjoint counter range, so
    replicate ``r`` is reproducible regardless of execution order.
    """

    master: int
    stream: int = 0

    def rng(self, substream: int = 0) -> np.random.Generator:
        key = [self.master & _MASK64, self.stream & _MASK64]
        bitgen = np.random.Philox(key=key, counter=[0, 0, substream & _MASK64, 0])
        return np.random.Generator(bitgen)

    def child(self, k: int) -> "SeedSpec":
        """A seed for the ``k``-th sub-replicate, independent of this one."""
        return SeedSpec(self.master, (self.stream * 1_000_003 + k + 1) & _MASK64)


def uniform_in_window(window: Window, m: int, rng: np.random.Generator) -> np.ndarray:
    d = window.dim
    if window.shape == "cube":
        return (rng.random((m, d)) - 0.5) * window.size
    g = rng.standard_normal((m, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    rad = window.size * rng.random((m, 1)) ** (1.0 / d)
    return g / norms * rad


def uniform_in_annulus(d: int, r_in: float, r_out: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` uniform points on ``B_{r_out} \\ B_{r_in}`` (centred at the origin)."""
    g = rng.standard_normal((m, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    u = rng.random((m, 1))
    rad = (r_in**d + u * (r_out**d - r_in**d)) ** (1.0 / d)
    return g / norms * rad


class NestedBallSampler:
    """Unit-intensity Poisson points on growing balls ``B_L(0)``.

    Each :meth:`extend` doubles ``L`` and adds the annulus from a fresh
    substream, so the inner points are kept and every stage is a
    restriction of one underlying process.
    """

    def __init__(self, d: int, seed: SeedSpec, L0: float):
        if not L0 > 0:
            raise GeometryError("initial radius must be positive")
        self.d = d
        self.seed = seed
        self.L = float(L0)
        self.stage = 0
        window = Window.ball_of_radius(self.L, d)
        rng = seed.rng(0)
        m = int(rng.poisson(window.volume))
        self._pts = uniform_in_window(window, m, rng)

    @property
    def points(self) -> np.ndarray:
        return self._pts

    def config(self) -> Config:
        return Config(self._pts, dim=self.d, check=False)

    def extend(self, factor: float = 2.0) -> None:
        new_l = self.L * factor
        self.stage += 1
        rng = self.seed.rng(self.stage)
        vol = ball_volume(self.d, new_l) - ball_volume(self.d, self.L)
        m = int(rng.poisson(vol))
        self._pts = np.vstack([self._pts, uniform_in_annulus(self.d, self.L, new_l, m, rng)])
        self.L = new_l


def sample_poisson(window: Window, seed: SeedSpec, substream: int = 0) -> Config:
    """Unit-intensity Poisson process restricted to ``window``."""
    rng = seed.rng(substream)
    m = int(rng.poisson(window.volume))
    # continuous draws are a.s. distinct; in large windows a legitimate gap
    # can fall below the relative duplicate threshold, so it is not applied
    return Config(uniform_in_window(window, m, rng), dim=window.dim, check=False)


def sample_binomial(n: float, m: int, shape: str, dim: int, seed: SeedSpec, substream: int = 0) -> Config:
    """``m`` i.i.d. uniform points on ``W_n``; ``m = n`` gives ``chi_n``."""
    if n < 1:
        raise GeometryError(f"binomial window index must be >= 1, got {n}")
    if m < 0:
        raise GeometryError(f"negative point count {m}")
    window = Window(shape, n, dim)
    return Config(uniform_in_window(window, int(m), seed.rng(substream)), dim=dim, check=False)


def add_point(phi: Config, x) -> Config:
    """``phi`` with ``x`` appended as its last point."""
    x = as_point(x, phi.dim)
    if x in phi:
        raise GeometryError(f"point {x} already belongs to the configuration")
    pts = np.vstack([phi.points, x[None, :]])
    out = Config(pts, dim=phi.dim, check=False)
    if len(out) > 1:
        thr = out.duplicate_threshold()
        if np.linalg.norm(phi.points - x, axis=1).min() <= thr:
            raise GeometryError(f"point {x} coincides with a configuration point")
    return out


def remove_point(phi: Config, x) -> Config:
    k = phi.index_of(x)
    if k < 0:
        raise GeometryError(f"point {x} is not in the configuration")
    return phi.subset(np.delete(np.arange(len(phi)), k))
