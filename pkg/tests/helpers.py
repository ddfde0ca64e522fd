"""Shared sampling helpers for the tests."""

import numpy as np
from hypothesis import strategies as st

from lilypond.geometry import Config, Window
from lilypond.sampling import SeedSpec, sample_poisson


def poisson_ball(d: int, radius: float, seed: int, stream: int = 0) -> Config:
    return sample_poisson(Window.ball_of_radius(radius, d), SeedSpec(seed, stream))


def distinct_points(d: int, min_size: int = 2, max_size: int = 12, lo: float = -10.0, hi: float = 10.0):
    """Hypothesis strategy for configurations with well separated points."""
    coord = st.floats(lo, hi, allow_nan=False, allow_infinity=False)
    pts = st.lists(st.tuples(*[coord] * d), min_size=min_size, max_size=max_size)

    def ok(rows):
        a = np.array(rows, dtype=float).reshape(-1, d)
        if len(a) < 2:
            return True
        dist = np.linalg.norm(a[:, None] - a[None], axis=2)
        return dist[np.triu_indices(len(a), 1)].min() > 1e-3

    return pts.filter(ok).map(lambda rows: Config(np.array(rows, dtype=float).reshape(-1, d)))


ACCEPTANCE_LINES: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store the pass/fail line of an acceptance criterion for the session summary."""
    prev = ACCEPTANCE_LINES.get(criterion)
    if prev is not None:
        ok = ok and prev[0]
        detail = prev[1] + "; " + detail
    ACCEPTANCE_LINES[criterion] = (ok, detail)
